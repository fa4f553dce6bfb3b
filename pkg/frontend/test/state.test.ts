import { describe, expect, it } from "vitest";

import {
  aggregateTrend,
  analysisRevision,
  ConnectionState,
  EventTail,
  gcFraction,
  histogram,
  iterationMarkers,
  PlanEditor,
} from "../src/state.js";
import type { AnalysisPayload, EventRecord, Gate, RegistryDescriptor } from "../src/types.js";

function planGate(objectives: any[]): Gate {
  return {
    gate_id: "g1_plan_0",
    run_id: "r1",
    iteration: 1,
    stage: "plan",
    proposed_payload: { objectives, rationale: "why", iteration: 1 },
    resolution: null,
  };
}

const surrogateObjective = {
  id: "surr",
  name: "surrogate",
  description: "maximize surrogate",
  kind: "candidate_wise",
  direction: "maximize",
  weight: 1.0,
  scorer: { descriptor_id: "kmer_surrogate_score", params: {} },
};

const hingeDescriptor: RegistryDescriptor = {
  descriptor_id: "stability_hinge",
  kind: "candidate_wise",
  param_schema: { margin: { type: "float", default: 0.15, constraint: "" } },
  range: [0, "inf"],
  direction_hint: "minimize",
  description: "hinge on the stability penalty",
};

describe("PlanEditor", () => {
  it("starts clean and not dirty", () => {
    const editor = new PlanEditor(planGate([surrogateObjective]));
    expect(editor.validate()).toEqual([]);
    expect(editor.isDirty()).toBe(false);
  });

  it("adding a registry objective makes it dirty and keeps it valid", () => {
    const editor = new PlanEditor(planGate([surrogateObjective]));
    const added = editor.addFromRegistry(hingeDescriptor, {}, { margin: 0.02 });
    expect(added.direction).toBe("minimize");
    expect((added.scorer as any).descriptor_id).toBe("stability_hinge");
    expect(editor.isDirty()).toBe(true);
    expect(editor.validate()).toEqual([]);
    expect(editor.revisionPayload().objectives.map((o) => o.id)).toEqual([
      "surr",
      "stability_hinge",
    ]);
  });

  it("rejects duplicate ids, mirroring the server rule", () => {
    const editor = new PlanEditor(planGate([surrogateObjective]));
    editor.addFromRegistry(hingeDescriptor, { id: "surr" });
    expect(editor.validate().some((e) => e.includes("duplicate"))).toBe(true);
  });

  it("rejects negative weights and weighted filters", () => {
    const editor = new PlanEditor(planGate([surrogateObjective]));
    editor.update(0, { weight: -1 });
    expect(editor.validate().some((e) => e.includes("weight must be >= 0"))).toBe(true);
    editor.update(0, { weight: 1, kind: "filter", direction: "not_applicable" });
    expect(editor.validate().some((e) => e.includes("filters cannot carry weights"))).toBe(true);
  });

  it("requires at least one objective", () => {
    const editor = new PlanEditor(planGate([surrogateObjective]));
    editor.remove(0);
    expect(editor.validate().some((e) => e.includes("at least one objective"))).toBe(true);
  });

  it("refuses to wrap an analysis gate", () => {
    const gate = { ...planGate([]), stage: "analysis" } as Gate;
    expect(() => new PlanEditor(gate)).toThrow(/not a plan gate/);
  });
});

describe("analysisRevision", () => {
  const report: AnalysisPayload = {
    overview: "o",
    performance_analysis: "p",
    issues_and_concerns: "i",
    strategic_recommendations: "keep going",
    objective_stats: {},
    top_candidates: [],
    termination: "continue",
    termination_reason: "r",
  };

  it("appends reviewer feedback to strategic recommendations", () => {
    const payload = analysisRevision(report, "watch the off-target tail");
    expect(payload.strategic_recommendations).toContain("keep going");
    expect(payload.strategic_recommendations).toContain("[reviewer] watch the off-target tail");
  });

  it("rejects empty feedback", () => {
    expect(() => analysisRevision(report, "   ")).toThrow(/non-empty/);
  });
});

function generationEvent(seq: number, iteration: number, generation: number, best: number): EventRecord {
  return {
    run_id: "r1",
    seq,
    ts: "t",
    iteration,
    type: "generation",
    data: { generation, best_aggregate: best, mean_aggregate: best / 2 },
  };
}

describe("dashboard series", () => {
  it("builds the trend from generation events only", () => {
    const events = [
      generationEvent(1, 1, 0, 0.5),
      { run_id: "r1", seq: 2, ts: "t", iteration: 1, type: "plan_proposed", data: {} },
      generationEvent(3, 1, 1, 0.6),
      generationEvent(4, 2, 0, 0.6),
      generationEvent(5, 2, 1, 0.7),
    ] as EventRecord[];
    const trend = aggregateTrend(events);
    expect(trend).toHaveLength(4);
    expect(trend.map((p) => p.best)).toEqual([0.5, 0.6, 0.6, 0.7]);
  });

  it("emits one marker per iteration at its last generation", () => {
    const trend = aggregateTrend([
      generationEvent(1, 1, 0, 0.5),
      generationEvent(2, 1, 1, 0.6),
      generationEvent(3, 2, 0, 0.6),
      generationEvent(4, 2, 1, 0.7),
      generationEvent(5, 3, 0, 0.8),
    ] as EventRecord[]);
    const markers = iterationMarkers(trend);
    expect(markers.map((m) => [m.iteration, m.best])).toEqual([
      [1, 0.6],
      [2, 0.7],
      [3, 0.8],
    ]);
  });

  it("histogram covers every value exactly once", () => {
    const values = [0, 0.1, 0.2, 0.5, 0.9, 1.0];
    const bins = histogram(values, 5);
    expect(bins.reduce((acc, b) => acc + b.count, 0)).toBe(values.length);
    expect(bins[0].lo).toBe(0);
    expect(bins[bins.length - 1].hi).toBeCloseTo(1.0);
  });

  it("gcFraction matches a hand count", () => {
    expect(gcFraction("GCGC")).toBe(1);
    expect(gcFraction("ATAT")).toBe(0);
    expect(gcFraction("ACGT")).toBe(0.5);
  });
});

describe("EventTail", () => {
  it("deduplicates poll overlap by sequence number", () => {
    const tail = new EventTail(10);
    tail.push([generationEvent(1, 1, 0, 0.5), generationEvent(2, 1, 1, 0.6)]);
    tail.push([generationEvent(2, 1, 1, 0.6), generationEvent(3, 1, 2, 0.7)]);
    expect(tail.events.map((e) => e.seq)).toEqual([1, 2, 3]);
    expect(tail.latestSeq).toBe(3);
  });

  it("caps the buffer", () => {
    const tail = new EventTail(2);
    tail.push([generationEvent(1, 1, 0, 0.1), generationEvent(2, 1, 1, 0.2), generationEvent(3, 1, 2, 0.3)]);
    expect(tail.events.map((e) => e.seq)).toEqual([2, 3]);
  });
});

describe("ConnectionState", () => {
  it("backs off exponentially and resets on success", () => {
    const conn = new ConnectionState();
    expect(conn.noteFailure()).toBe(1000);
    expect(conn.noteFailure()).toBe(2000);
    expect(conn.noteFailure()).toBe(4000);
    expect(conn.online).toBe(false);
    conn.noteSuccess();
    expect(conn.online).toBe(true);
    expect(conn.noteFailure()).toBe(1000);
  });
});
