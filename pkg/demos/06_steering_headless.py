"""Human steering without a browser: a copilot run parks at its plan gate,
the operator revises the plan by adding an objective, and the run resumes
with the enlarged objective set. The same flow drives the CLI's
`gates` / `approve` / `resume` commands and the web UI.
"""

import json
import shutil
import tempfile
from pathlib import Path

import yaml

from bilevo.orchestrator import (
    GateResolution,
    Orchestrator,
    RunConfig,
    list_gates,
    resolve_gate,
    run,
)

DATA = Path(__file__).parent.parent / "src" / "bilevo" / "data"
workdir = Path(tempfile.mkdtemp(prefix="bilevo_steering_"))
run_dir = workdir / "run"

raw = yaml.safe_load((DATA / "desk_config.yaml").read_text())
raw["base_dir"] = str(DATA.resolve())
raw["run_id"] = "steering-demo"
raw["mode"] = "copilot"
cfg = RunConfig.from_dict(raw)

status = run(run_dir, cfg)  # no channel attached: copilot parks at the first gate
print(f"run status after launch: {status}")

gate = list_gates(run_dir, status="open")[0]
print(f"open gate: {gate['gate_id']} ({gate['stage']}, iteration {gate['iteration']})")
print("proposed objectives:", [o["id"] for o in gate["proposed_payload"]["objectives"]])

revised = list(gate["proposed_payload"]["objectives"])
revised.append(
    {
        "id": "stability_hinge",
        "name": "sequence stability hinge",
        "description": "the reviewer wants stability pressure from iteration 1",
        "kind": "candidate_wise",
        "direction": "minimize",
        "scorer": {
            "descriptor_id": "stability_hinge",
            "params": {"margin": 0.02, "target_gc": 0.40},
        },
    }
)
resolve_gate(
    run_dir,
    gate["gate_id"],
    GateResolution("revise", {"objectives": revised}, resolver="demo-operator"),
)
print("revision recorded; resuming ...")

while True:
    status = Orchestrator.resume(run_dir).advance()
    if status != "awaiting_approval":
        break
    gate = list_gates(run_dir, status="open")[0]
    print(f"accepting {gate['gate_id']} ({gate['stage']})")
    resolve_gate(run_dir, gate["gate_id"], GateResolution("accept", resolver="demo-operator"))

print(f"final status: {status}")
events = [json.loads(l) for l in (run_dir / "events.log").read_text().splitlines()]
match = next(e for e in events if e["type"] == "match_completed")
print("iteration-1 matched objectives:",
      [m[0] for m in match["data"]["result"]["matched"]])
gate_events = [e for e in events if e["type"] == "gate_resolved"]
print("gate resolutions:",
      [(e["data"]["gate_id"], e["data"]["action"], e["data"]["resolver"]) for e in gate_events])

shutil.rmtree(workdir)
