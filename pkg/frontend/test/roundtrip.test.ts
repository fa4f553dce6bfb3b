/** Steering round-trip against the real service: a scripted copilot run is
 * created over HTTP, the plan gate is opened and revised by adding a
 * registry objective through the same view-model layer the DOM components
 * drive, the run completes, and the dashboard's iteration markers match the
 * event log. (The sandbox has no browser binary, so the UI's state/API
 * layer stands in for the rendered page; every mutation still travels
 * through the documented endpoints.)
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { aggregateTrend, iterationMarkers, PlanEditor } from "../src/state.js";
import type { EventRecord, Gate } from "../src/types.js";

const PORT = 8893;
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;
let rootDir: string;
const api = new ApiClient({ baseUrl: BASE });

function deskConfig(runId: string): Record<string, unknown> {
  const raw = execFileSync(
    "python3",
    [
      "-c",
      `
import json, yaml, bilevo
from pathlib import Path
data = Path(bilevo.__file__).parent / "data"
cfg = yaml.safe_load((data / "desk_config.yaml").read_text())
cfg["base_dir"] = str(data.resolve())
print(json.dumps(cfg))
`,
    ],
    { encoding: "utf-8" },
  );
  const cfg = JSON.parse(raw);
  cfg.run_id = runId;
  cfg.mode = "copilot";
  return cfg;
}

async function waitFor<T>(
  fn: () => Promise<T | null>,
  what: string,
  timeoutMs = 60_000,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const value = await fn().catch(() => null);
    if (value !== null) return value;
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  rootDir = mkdtempSync(join(tmpdir(), "bilevo-ui-rt-"));
  service = spawn(
    "python3",
    ["-c", `from bilevo.service import serve; serve("127.0.0.1:${PORT}", ${JSON.stringify(rootDir)})`],
    { stdio: "ignore" },
  );
  await waitFor(async () => {
    const resp = await fetch(`${BASE}/runs`);
    return resp.ok ? true : null;
  }, "service to come up");
}, 60_000);

afterAll(() => {
  service?.kill();
  rmSync(rootDir, { recursive: true, force: true });
});

async function openGate(runId: string, stage: "plan" | "analysis"): Promise<Gate> {
  return waitFor(async () => {
    const gates = await api.getGates(runId, "open");
    return gates.find((g) => g.stage === stage) ?? null;
  }, `open ${stage} gate`);
}

describe("steering round-trip over the live service", () => {
  const RUN_ID = "ui-roundtrip";

  it(
    "revises the plan gate by adding a registry objective and completes the run",
    async () => {
      const summary = await api.createRun(deskConfig(RUN_ID));
      expect(summary.run_id).toBe(RUN_ID);

      // the plan gate editor opens on the gate's proposed payload
      const gate = await openGate(RUN_ID, "plan");
      const editor = new PlanEditor(gate);
      expect(editor.objectives.map((o) => o.id)).toEqual(["on_target_surrogate"]);

      // add-from-registry: the catalog comes from the service
      const registry = await api.getRegistry();
      const hinge = registry.find((d) => d.descriptor_id === "stability_hinge");
      expect(hinge).toBeDefined();
      editor.addFromRegistry(hinge!, {}, { margin: 0.02, target_gc: 0.4 });
      expect(editor.validate()).toEqual([]);
      expect(editor.isDirty()).toBe(true);

      await api.resolveGate(RUN_ID, gate.gate_id, {
        action: "revise",
        payload: editor.revisionPayload(),
      });

      // server records the revision with the added objective id
      const resolved = await waitFor(async () => {
        const { events } = await api.getEvents(RUN_ID, 0);
        return events.find((e) => e.type === "gate_resolved" && e.data.gate_id === gate.gate_id) ?? null;
      }, "gate_resolved event");
      expect(resolved.data.action).toBe("revise");
      const revisedIds = resolved.data.payload.objectives.map((o: { id: string }) => o.id);
      expect(revisedIds).toContain("stability_hinge");

      // phase 2 matches the enlarged set
      const match = await waitFor(async () => {
        const { events } = await api.getEvents(RUN_ID, 0);
        return events.find((e) => e.type === "match_completed" && e.iteration === 1) ?? null;
      }, "match_completed event");
      const matchedIds = match.data.result.matched.map((m: [string, string, unknown]) => m[0]);
      expect(matchedIds.sort()).toEqual(["on_target_surrogate", "stability_hinge"]);

      // accept every remaining gate until the run completes
      for (;;) {
        const run = await api.getRun(RUN_ID);
        if (run.status === "finished") break;
        expect(run.status).not.toBe("failed");
        const gates = await api.getGates(RUN_ID, "open");
        if (gates.length > 0) {
          try {
            await api.resolveGate(RUN_ID, gates[0].gate_id, { action: "accept" });
          } catch (err) {
            // gate race: the UI refreshes and retries, mirroring the page behavior
            if (!(err instanceof ApiError && err.status === 409)) throw err;
          }
        }
        await new Promise((r) => setTimeout(r, 100));
      }

      // dashboard markers equal the event log's iteration count
      const { events } = await api.getEvents(RUN_ID, 0);
      const markers = iterationMarkers(aggregateTrend(events as EventRecord[]));
      const iterations = new Set(
        events.filter((e) => e.type === "iteration_completed").map((e) => e.iteration),
      );
      expect(markers.length).toBe(iterations.size);
      expect(markers.length).toBe(2);

      // resolving the same gate twice surfaces the 409 race to the editor
      await expect(
        api.resolveGate(RUN_ID, gate.gate_id, { action: "accept" }),
      ).rejects.toMatchObject({ status: 409 });
    },
    240_000,
  );

  it("population pages and histogram inputs come straight from the server", async () => {
    const page = await api.getPopulation(RUN_ID, 2, { limit: 10, sort: "aggregate" });
    expect(page.total).toBe(60);
    expect(page.candidates).toHaveLength(10);
    const aggs = page.candidates.map((c) => c.aggregate ?? 0);
    expect([...aggs].sort((a, b) => b - a)).toEqual(aggs);
    expect(Object.keys(page.stats).sort()).toEqual(["on_target_surrogate", "stability_hinge"]);
  });
});
