from __future__ import annotations

import json
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from bilevo.service import create_app

from test_orchestrator import make_cfg, schedule


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "runs", long_poll_timeout=0.4, poll_interval=0.05)
    with TestClient(app) as c:
        yield c


def config_dict(tmp_path, mode="autopilot", run_id="svc-run", max_iterations=1, **over) -> dict:
    from bilevo.orchestrator import Mode

    cfg = make_cfg(
        tmp_path, mode=Mode(mode), max_iterations=max_iterations, run_id=run_id, **over
    )
    return cfg.to_dict()


def wait_status(client, run_id, wanted, timeout=30.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        summary = client.get(f"/runs/{run_id}").json()
        if summary["status"] in wanted:
            return summary
        time.sleep(0.05)
    raise AssertionError(f"run never reached {wanted}; last: {summary}")


def wait_open_gate(client, run_id, stage, timeout=30.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        gates = client.get(f"/runs/{run_id}/gates", params={"status": "open"}).json()
        for gate in gates:
            if gate["stage"] == stage:
                return gate
        time.sleep(0.05)
    raise AssertionError(f"no open {stage} gate appeared for {run_id}")


class TestLifecycle:
    def test_autopilot_run_finishes(self, client, tmp_path):
        resp = client.post("/runs", json=config_dict(tmp_path))
        assert resp.status_code == 201
        body = resp.json()
        assert body["run_id"] == "svc-run"
        summary = wait_status(client, "svc-run", {"finished"})
        assert summary["best_aggregate"] is not None
        listing = client.get("/runs").json()
        assert [r["run_id"] for r in listing] == ["svc-run"]

    def test_malformed_config_400(self, client):
        resp = client.post("/runs", json={"goal": ""})
        assert resp.status_code == 400
        body = resp.json()
        assert body["code"] == 400 and "malformed config" in body["message"]

    def test_unknown_run_404(self, client):
        assert client.get("/runs/nope").status_code == 404
        assert client.get("/runs/nope/iterations/1").status_code == 404
        assert client.post("/runs/nope/abort").status_code == 404

    def test_iteration_record_and_population_page(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path))
        wait_status(client, "svc-run", {"finished"})
        record = client.get("/runs/svc-run/iterations/1").json()
        assert record["iteration"] == 1
        assert record["report"]["termination"] in ("continue", "stop")

        page = client.get(
            "/runs/svc-run/iterations/1/population", params={"limit": 5, "sort": "aggregate"}
        ).json()
        assert page["total"] >= 5
        assert len(page["candidates"]) == 5
        aggs = [c["aggregate"] for c in page["candidates"]]
        assert aggs == sorted(aggs, reverse=True)

        page2 = client.get(
            "/runs/svc-run/iterations/1/population",
            params={"limit": 5, "offset": 5, "sort": "aggregate"},
        ).json()
        ids1 = {c["id"] for c in page["candidates"]}
        assert ids1.isdisjoint({c["id"] for c in page2["candidates"]})

    def test_events_since_and_long_poll_timeout(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path))
        wait_status(client, "svc-run", {"finished"})
        body = client.get("/runs/svc-run/events", params={"since": 0}).json()
        assert body["events"]
        seqs = [e["seq"] for e in body["events"]]
        assert seqs == sorted(seqs)
        last = body["latest_seq"]
        t0 = time.monotonic()
        empty = client.get("/runs/svc-run/events", params={"since": last}).json()
        assert empty["events"] == []
        assert time.monotonic() - t0 >= 0.3  # long-poll waited before answering

    def test_abort_run(self, client, tmp_path):
        cfg = config_dict(
            tmp_path, mode="copilot", run_id="svc-abort", max_iterations=2
        )
        client.post("/runs", json=cfg)
        wait_status(client, "svc-abort", {"awaiting_approval"})
        resp = client.post("/runs/svc-abort/abort")
        assert resp.status_code == 202
        summary = wait_status(client, "svc-abort", {"failed"})
        assert summary["status"] == "failed"


class TestGatesOverHttp:
    def test_copilot_gate_round_trip(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path, mode="copilot", run_id="svc-gate"))
        wait_status(client, "svc-gate", {"awaiting_approval"})

        gates = client.get("/runs/svc-gate/gates", params={"status": "open"}).json()
        assert len(gates) == 1
        gate = gates[0]
        assert gate["stage"] == "plan"

        resp = client.post(
            f"/runs/svc-gate/gates/{gate['gate_id']}",
            json={"action": "accept", "resolver": "api"},
        )
        assert resp.status_code == 200

        # run continues to the analysis gate, then finishes after acceptance
        analysis = wait_open_gate(client, "svc-gate", "analysis")
        client.post(f"/runs/svc-gate/gates/{analysis['gate_id']}", json={"action": "accept"})
        wait_status(client, "svc-gate", {"finished"})

        events = client.get("/runs/svc-gate/events").json()["events"]
        resolved = [e for e in events if e["type"] == "gate_resolved"]
        assert len(resolved) == 2
        assert all(e["data"]["resolver"] in ("api",) for e in resolved)

    def test_double_resolution_409(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path, mode="copilot", run_id="svc-409"))
        wait_status(client, "svc-409", {"awaiting_approval"})
        gate = client.get("/runs/svc-409/gates", params={"status": "open"}).json()[0]
        assert client.post(f"/runs/svc-409/gates/{gate['gate_id']}", json={"action": "accept"}).status_code == 200
        wait_status(client, "svc-409", {"awaiting_approval", "finished"})
        resp = client.post(f"/runs/svc-409/gates/{gate['gate_id']}", json={"action": "accept"})
        assert resp.status_code == 409

    def test_unknown_gate_404(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path, mode="copilot", run_id="svc-404"))
        wait_status(client, "svc-404", {"awaiting_approval"})
        resp = client.post("/runs/svc-404/gates/g9_plan_0", json={"action": "accept"})
        assert resp.status_code == 404

    def test_invalid_revision_400_gate_stays_open(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path, mode="copilot", run_id="svc-rev"))
        wait_status(client, "svc-rev", {"awaiting_approval"})
        gate = client.get("/runs/svc-rev/gates", params={"status": "open"}).json()[0]
        bad = {"action": "revise", "payload": {"objectives": [{"id": "x"}, {"id": "x"}]}}
        resp = client.post(f"/runs/svc-rev/gates/{gate['gate_id']}", json=bad)
        assert resp.status_code == 400
        assert "invalid revision" in resp.json()["message"]
        still_open = client.get("/runs/svc-rev/gates", params={"status": "open"}).json()
        assert still_open and still_open[0]["gate_id"] == gate["gate_id"]

    def test_revision_adds_objective(self, client, tmp_path):
        client.post("/runs", json=config_dict(tmp_path, mode="copilot", run_id="svc-add"))
        wait_status(client, "svc-add", {"awaiting_approval"})
        gate = client.get("/runs/svc-add/gates", params={"status": "open"}).json()[0]
        objectives = list(gate["proposed_payload"]["objectives"])
        objectives.append(
            {
                "id": "stability",
                "name": "stability penalty",
                "description": "minimize instability",
                "kind": "candidate_wise",
                "direction": "minimize",
                "scorer": {"descriptor_id": "gc_homopolymer_penalty", "params": {}},
            }
        )
        resp = client.post(
            f"/runs/svc-add/gates/{gate['gate_id']}",
            json={"action": "revise", "payload": {"objectives": objectives}, "resolver": "api"},
        )
        assert resp.status_code == 200
        wait_open_gate(client, "svc-add", "analysis")
        events = client.get("/runs/svc-add/events").json()["events"]
        match = [e for e in events if e["type"] == "match_completed"][0]
        assert {m[0] for m in match["data"]["result"]["matched"]} == {"count_a", "stability"}


class TestRegistryAndAuth:
    def test_registry_catalog(self, client):
        catalog = client.get("/registry").json()
        ids = {d["descriptor_id"] for d in catalog}
        assert "stability_hinge" in ids and "kmer_surrogate_score" in ids

    def test_auth_required_when_token_set(self, tmp_path):
        app = create_app(tmp_path / "runs", auth_token="sekrit", long_poll_timeout=0.2)
        with TestClient(app) as client:
            assert client.get("/runs").status_code == 401
            ok = client.get("/runs", headers={"Authorization": "Bearer sekrit"})
            assert ok.status_code == 200
