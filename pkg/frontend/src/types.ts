/** Wire types mirroring the service API. Field names match the server exactly. */

export type RunStatus = "pending" | "running" | "awaiting_approval" | "finished" | "failed";

export interface RunSummary {
  run_id: string;
  mode: "copilot" | "semipilot" | "autopilot";
  status: RunStatus;
  iteration: number;
  best_aggregate: number | null;
  started_at: string | null;
  updated_at: string | null;
}

export interface ScorerHint {
  descriptor_id: string;
  params: Record<string, unknown>;
}

/** Objective record as carried in plan payloads ("scorer" is the binding hint). */
export interface ObjectiveRecord {
  id: string;
  name: string;
  description: string;
  kind: "candidate_wise" | "population_wise" | "filter";
  direction: "maximize" | "minimize" | "not_applicable";
  weight: number | null;
  scorer?: ScorerHint | string | null;
}

export interface PlanPayload {
  objectives: ObjectiveRecord[];
  rationale: string;
  iteration: number;
}

export interface ObjectiveStats {
  mean: number;
  std: number;
  min: number;
  max: number;
  delta_vs_previous?: number;
}

export interface AnalysisPayload {
  overview: string;
  performance_analysis: string;
  issues_and_concerns: string;
  strategic_recommendations: string;
  objective_stats: Record<string, ObjectiveStats>;
  top_candidates: [string, number][];
  termination: "continue" | "stop";
  termination_reason: string;
}

export interface Gate {
  gate_id: string;
  run_id: string;
  iteration: number;
  stage: "plan" | "analysis";
  proposed_payload: PlanPayload | AnalysisPayload;
  resolution: { action: string; resolver: string } | null;
}

export interface GateResolutionBody {
  action: "accept" | "revise";
  payload?: Record<string, unknown>;
  resolver?: string;
}

export interface EventRecord {
  run_id: string;
  seq: number;
  ts: string;
  iteration: number;
  type: string;
  data: Record<string, any>;
}

export interface CandidateRecord {
  id: string;
  payload: { kind: string; text?: string; bits?: string; width?: number; values?: Record<string, number> };
  origin: { iteration: number; generation: number; parent_ids: string[]; proposer_tag: string };
  scores: Record<string, number>;
  aggregate: number | null;
}

export interface PopulationPage {
  iteration: number;
  total: number;
  offset: number;
  limit: number;
  stats: Record<string, ObjectiveStats>;
  candidates: CandidateRecord[];
}

export interface IterationRecord {
  iteration: number;
  plan: PlanPayload | null;
  match_result: { matched: [string, string, Record<string, unknown>][]; unmatched: [string, string][] } | null;
  generations: number;
  evaluations: number;
  report: AnalysisPayload;
  population_ref: string;
}

export interface ParamSpec {
  type: string;
  default: unknown;
  constraint: string;
}

export interface RegistryDescriptor {
  descriptor_id: string;
  kind: ObjectiveRecord["kind"];
  param_schema: Record<string, ParamSpec>;
  range: [number | "inf" | "-inf", number | "inf" | "-inf"];
  direction_hint: "maximize" | "minimize" | "filter";
  description: string;
}
