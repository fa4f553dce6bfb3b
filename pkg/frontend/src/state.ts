/** Framework-free view-model layer: plan-gate editing with client-side
 * validation mirroring the server rules, analysis revisions, and the
 * chart series derived from server events. The DOM layer renders only what
 * these produce; no scores are ever computed client-side.
 */

import type {
  AnalysisPayload,
  EventRecord,
  Gate,
  ObjectiveRecord,
  PlanPayload,
  RegistryDescriptor,
} from "./types.js";

// ---------------------------------------------------------------------------
// Plan gate editing
// ---------------------------------------------------------------------------

export class PlanEditor {
  readonly gateId: string;
  readonly runId: string;
  readonly rationale: string;
  objectives: ObjectiveRecord[];
  private original: string;

  constructor(gate: Gate) {
    if (gate.stage !== "plan") throw new Error(`not a plan gate: ${gate.gate_id}`);
    const payload = gate.proposed_payload as PlanPayload;
    this.gateId = gate.gate_id;
    this.runId = gate.run_id;
    this.rationale = payload.rationale ?? "";
    this.objectives = payload.objectives.map((o) => ({ ...o }));
    this.original = JSON.stringify(this.objectives);
  }

  update(index: number, patch: Partial<ObjectiveRecord>): void {
    this.objectives[index] = { ...this.objectives[index], ...patch };
  }

  remove(index: number): void {
    this.objectives.splice(index, 1);
  }

  addFromRegistry(
    descriptor: RegistryDescriptor,
    overrides: Partial<ObjectiveRecord> = {},
    params: Record<string, unknown> = {},
  ): ObjectiveRecord {
    const direction =
      descriptor.direction_hint === "filter" ? "not_applicable" : descriptor.direction_hint;
    const record: ObjectiveRecord = {
      id: overrides.id ?? descriptor.descriptor_id,
      name: overrides.name ?? descriptor.descriptor_id.replace(/_/g, " "),
      description: overrides.description ?? descriptor.description,
      kind: descriptor.kind,
      direction: overrides.direction ?? direction,
      weight: overrides.weight ?? null,
      scorer: { descriptor_id: descriptor.descriptor_id, params },
    };
    this.objectives.push(record);
    return record;
  }

  /** Mirrors the server's revision validation: unique non-empty ids,
   * weights >= 0, filters without weight or direction. */
  validate(): string[] {
    const errors: string[] = [];
    const seen = new Set<string>();
    for (const obj of this.objectives) {
      if (!obj.id || !obj.id.trim()) errors.push("every objective needs a non-empty id");
      if (seen.has(obj.id)) errors.push(`duplicate objective id ${obj.id}`);
      seen.add(obj.id);
      if (obj.weight !== null && obj.weight !== undefined && obj.weight < 0)
        errors.push(`objective ${obj.id}: weight must be >= 0`);
      if (obj.kind === "filter") {
        if (obj.direction !== "not_applicable")
          errors.push(`objective ${obj.id}: filters take direction not_applicable`);
        if (obj.weight !== null && obj.weight !== undefined)
          errors.push(`objective ${obj.id}: filters cannot carry weights`);
      } else if (obj.direction !== "maximize" && obj.direction !== "minimize") {
        errors.push(`objective ${obj.id}: direction must be maximize or minimize`);
      }
    }
    if (this.objectives.length === 0) errors.push("a plan needs at least one objective");
    return errors;
  }

  isDirty(): boolean {
    return JSON.stringify(this.objectives) !== this.original;
  }

  /** The revise-action payload; the server merges it over the proposal. */
  revisionPayload(): { objectives: ObjectiveRecord[] } {
    return { objectives: this.objectives.map((o) => ({ ...o })) };
  }
}

/** Analysis-gate revision: attach reviewer feedback to the
 * strategic_recommendations section, leaving everything else verbatim. */
export function analysisRevision(
  report: AnalysisPayload,
  feedback: string,
): Record<string, unknown> {
  const trimmed = feedback.trim();
  if (!trimmed) throw new Error("feedback must be non-empty for a revision");
  return {
    strategic_recommendations: `${report.strategic_recommendations}\n\n[reviewer] ${trimmed}`,
  };
}

// ---------------------------------------------------------------------------
// Dashboard series
// ---------------------------------------------------------------------------

export interface TrendPoint {
  iteration: number;
  generation: number;
  best: number;
  mean: number;
  seq: number;
}

/** Best/mean aggregate per generation, ordered by event sequence. */
export function aggregateTrend(events: EventRecord[]): TrendPoint[] {
  return events
    .filter((e) => e.type === "generation")
    .map((e) => ({
      iteration: e.iteration,
      generation: e.data.generation as number,
      best: e.data.best_aggregate as number,
      mean: e.data.mean_aggregate as number,
      seq: e.seq,
    }));
}

/** One marker per iteration: the last generation point of that iteration. */
export function iterationMarkers(trend: TrendPoint[]): TrendPoint[] {
  const last = new Map<number, TrendPoint>();
  for (const point of trend) last.set(point.iteration, point);
  return [...last.values()].sort((a, b) => a.iteration - b.iteration);
}

export interface HistogramBin {
  lo: number;
  hi: number;
  count: number;
}

export function histogram(values: number[], bins = 12): HistogramBin[] {
  if (values.length === 0) return [];
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const width = hi > lo ? (hi - lo) / bins : 1;
  const out: HistogramBin[] = Array.from({ length: bins }, (_, i) => ({
    lo: lo + i * width,
    hi: lo + (i + 1) * width,
    count: 0,
  }));
  for (const v of values) {
    const idx = Math.min(bins - 1, Math.floor((v - lo) / width));
    out[idx].count += 1;
  }
  return out;
}

export function gcFraction(text: string): number {
  if (!text) return 0;
  let gc = 0;
  for (const ch of text) if (ch === "G" || ch === "C") gc += 1;
  return gc / text.length;
}

/** Rolling event tail with a bounded buffer, fed by the since long-poll. */
export class EventTail {
  events: EventRecord[] = [];
  latestSeq = 0;

  constructor(private capacity = 200) {}

  push(batch: EventRecord[]): void {
    for (const event of batch) {
      if (event.seq <= this.latestSeq) continue; // poll overlap
      this.events.push(event);
      this.latestSeq = event.seq;
    }
    if (this.events.length > this.capacity) {
      this.events.splice(0, this.events.length - this.capacity);
    }
  }
}

/** Retry-with-backoff wrapper used by the polling loop; surfaces a banner
 * state instead of throwing so the page can keep rendering. */
export class ConnectionState {
  online = true;
  retryDelayMs = 1000;
  private readonly maxDelayMs = 15_000;

  noteSuccess(): void {
    this.online = true;
    this.retryDelayMs = 1000;
  }

  noteFailure(): number {
    this.online = false;
    const delay = this.retryDelayMs;
    this.retryDelayMs = Math.min(this.maxDelayMs, this.retryDelayMs * 2);
    return delay;
  }
}
