from __future__ import annotations

import pytest

from bilevo.core import Normalizer


@pytest.fixture
def unit_normalizer():
    return Normalizer(lo=0.0, hi=1.0, clamp=False)
