"""Operator command line: create and drive runs, resolve gates headlessly,
score payloads ad hoc, rerun final selection, and serve the HTTP API.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import yaml

from .core import Attributes, EngineError, Fingerprint, Sequence, payload_from_dict
from .orchestrator import (
    ApprovalChannel,
    GateResolution,
    Mode,
    NullChannel,
    Orchestrator,
    RunConfig,
    list_gates,
    rerun_selection,
    resolve_gate,
)
from .scorers import default_registry

DATA_DIR = Path(__file__).parent / "data"
CONFIG_ENV = "BILEVO_CONFIG"
TOKEN_ENV = "BILEVO_TOKEN"


class InteractiveChannel(ApprovalChannel):
    """Terminal gate prompts: accept, or open an editor on the payload."""

    def request(self, gate):
        click.echo(f"\n== approval gate {gate['gate_id']} ({gate['stage']}, iteration {gate['iteration']}) ==")
        click.echo(yaml.safe_dump(gate["proposed_payload"], sort_keys=False))
        choice = click.prompt(
            "accept / revise / park", type=click.Choice(["accept", "revise", "park"]), default="accept"
        )
        if choice == "park":
            return None
        if choice == "accept":
            return GateResolution("accept", resolver="cli")
        edited = click.edit(yaml.safe_dump(gate["proposed_payload"], sort_keys=False))
        if edited is None:
            click.echo("editor closed without saving; parking the run")
            return None
        return GateResolution("revise", yaml.safe_load(edited), resolver="cli")


def _load_config(path: Path) -> dict:
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


def _pick_channel(mode: Mode, headless: bool) -> ApprovalChannel:
    if mode is Mode.AUTOPILOT or headless or not sys.stdin.isatty():
        return NullChannel()
    return InteractiveChannel()


def _report(run_dir: Path, status: str) -> None:
    click.echo(f"run directory: {run_dir}")
    click.echo(f"status: {status}")
    if status == "awaiting_approval":
        click.echo("open gates:")
        for gate in list_gates(run_dir, status="open"):
            click.echo(f"  {gate['gate_id']} ({gate['stage']}, iteration {gate['iteration']})")
        click.echo("resolve with: bilevo approve <run-dir> <gate-id> [--revise FILE], then resume")
    if status == "failed":
        raise SystemExit(1)


@click.group()
def main() -> None:
    """Bi-level goal-evolving optimization engine."""


@main.command()
@click.argument("directory", type=click.Path(path_type=Path))
def init(directory: Path) -> None:
    """Write a commented default run config and sample data files."""
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("desk_config.yaml", "plan_schedule.yaml", "surrogate_on_target.txt", "sample_motifs.jaspar"):
        target = directory / name
        if target.exists():
            click.echo(f"kept existing {target}")
            continue
        target.write_text((DATA_DIR / name).read_text())
        click.echo(f"wrote {target}")
    click.echo(f"\nnext: bilevo run {directory / 'desk_config.yaml'}")


@main.command(name="run")
@click.argument("config", required=False, type=click.Path(exists=True, path_type=Path))
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None)
@click.option("--seed", type=int, default=None, help="override outer_seed")
@click.option("--no-outer-loop", is_flag=True, help="fixed objectives, single inner loop")
@click.option("--run-dir", type=click.Path(path_type=Path), default=None)
@click.option("--run-id", default=None)
@click.option("--headless", is_flag=True, help="park on gates instead of prompting")
def run_cmd(config, mode, seed, no_outer_loop, run_dir, run_id, headless) -> None:
    """Execute a run from a YAML/JSON config file."""
    if config is None:
        env = os.environ.get(CONFIG_ENV)
        if not env:
            raise click.UsageError(f"pass a config path or set {CONFIG_ENV}")
        config = Path(env)
    raw = _load_config(config)
    if mode:
        raw["mode"] = mode
    if seed is not None:
        raw["outer_seed"] = seed
    if no_outer_loop:
        raw["outer_loop_enabled"] = False
    if run_id:
        raw["run_id"] = run_id
    raw.setdefault("base_dir", str(config.parent.resolve()))
    try:
        cfg = RunConfig.from_dict(raw)
    except EngineError as exc:
        raise click.ClickException(f"invalid config: {exc}") from exc
    run_dir = run_dir or Path.cwd() / "runs" / cfg.resolved_run_id()
    channel = _pick_channel(cfg.mode, headless)
    try:
        orch = Orchestrator.create(run_dir, cfg, channel=channel)
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    _report(run_dir, orch.advance())


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--headless", is_flag=True)
def resume(run_dir: Path, headless: bool) -> None:
    """Continue a parked or interrupted run."""
    try:
        orch = Orchestrator.resume(run_dir)
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    orch.channel = _pick_channel(orch.cfg.mode, headless)
    _report(run_dir, orch.advance())


def _parse_payload_line(line: str):
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    if line.startswith("{"):
        return payload_from_dict(json.loads(line))
    return Sequence(line.upper())


@main.command()
@click.option("--scorer", "descriptor_id", required=True, help="descriptor id from the registry")
@click.option("--params", "params_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--in", "payload_file", required=True, type=click.Path(exists=True, path_type=Path))
def score(descriptor_id: str, params_file, payload_file: Path) -> None:
    """Score payloads (one per line: raw sequence or JSON payload) ad hoc."""
    params = _load_config(params_file) if params_file else {}
    registry = default_registry()
    try:
        scorer = registry.bind(descriptor_id, params, base_dir=payload_file.parent)
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    payloads = []
    for line in payload_file.read_text().splitlines():
        payload = _parse_payload_line(line)
        if payload is not None:
            payloads.append(payload)
    if not payloads:
        raise click.ClickException("no payloads found in input file")
    if scorer.kind.value == "population_wise":
        click.echo(f"{scorer.score_population(payloads):.6f}")
        return
    for payload in payloads:
        try:
            value = scorer.score_candidate(payload)
            preview = payload.text[:40] if isinstance(payload, Sequence) else type(payload).__name__
            click.echo(f"{value:.6f}\t{preview}")
        except EngineError as exc:
            click.echo(f"error\t{exc}", err=True)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--status", type=click.Choice(["open", "resolved"]), default=None)
def gates(run_dir: Path, status) -> None:
    """List a run's approval gates."""
    for gate in list_gates(run_dir, status=status):
        state = "open" if gate.get("resolution") is None else "resolved"
        click.echo(f"{gate['gate_id']}\t{gate['stage']}\titeration {gate['iteration']}\t{state}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.argument("gate_id")
@click.option("--revise", "revise_file", type=click.Path(exists=True, path_type=Path), default=None)
def approve(run_dir: Path, gate_id: str, revise_file) -> None:
    """Resolve a gate headlessly; with --revise, the file holds the revision payload."""
    if revise_file:
        resolution = GateResolution("revise", _load_config(Path(revise_file)), resolver="cli")
    else:
        resolution = GateResolution("accept", resolver="cli")
    try:
        resolve_gate(run_dir, gate_id, resolution)
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"gate {gate_id} {resolution.action} recorded; run `bilevo resume {run_dir}`")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--n", "n", type=int, required=True)
def select(run_dir: Path, n: int) -> None:
    """Rerun retrospective final selection over all archived candidates."""
    try:
        final = rerun_selection(run_dir, n)
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    for cand in final:
        click.echo(f"{cand.id}\t{cand.aggregate:.6f}")


@main.command()
@click.option("--addr", default="127.0.0.1:8760", help="host:port to bind")
@click.option("--root", type=click.Path(path_type=Path), default=Path("runs"))
@click.option("--token", default=None, help="bearer token; defaults to $BILEVO_TOKEN")
@click.option("--ui", "ui_dir", type=click.Path(exists=True, path_type=Path), default=None,
              help="serve a built steering UI from this directory at /ui")
def serve(addr: str, root: Path, token, ui_dir) -> None:
    """Serve the HTTP API over a directory of runs."""
    from .service import serve as serve_app

    serve_app(addr, root, token or os.environ.get(TOKEN_ENV), ui_dir=ui_dir)


if __name__ == "__main__":
    main()
