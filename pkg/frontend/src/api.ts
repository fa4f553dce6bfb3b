/** Typed client for the bilevo service. All UI mutations go through here. */

import type {
  EventRecord,
  Gate,
  GateResolutionBody,
  IterationRecord,
  PopulationPage,
  RegistryDescriptor,
  RunSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ApiOptions {
  baseUrl: string;
  token?: string;
  fetchFn?: typeof fetch;
}

export class ApiClient {
  private baseUrl: string;
  private token?: string;
  private fetchFn: typeof fetch;

  constructor(opts: ApiOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/$/, "");
    this.token = opts.token;
    this.fetchFn = opts.fetchFn ?? fetch;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, { ...init, headers });
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        const body = await resp.json();
        message = body.message ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }

  listRuns(): Promise<RunSummary[]> {
    return this.request("/runs");
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.request(`/runs/${runId}`);
  }

  createRun(config: Record<string, unknown>): Promise<RunSummary> {
    return this.request("/runs", { method: "POST", body: JSON.stringify(config) });
  }

  getIteration(runId: string, k: number): Promise<IterationRecord> {
    return this.request(`/runs/${runId}/iterations/${k}`);
  }

  getPopulation(
    runId: string,
    k: number,
    opts: { limit?: number; offset?: number; sort?: string } = {},
  ): Promise<PopulationPage> {
    const params = new URLSearchParams();
    if (opts.limit !== undefined) params.set("limit", String(opts.limit));
    if (opts.offset !== undefined) params.set("offset", String(opts.offset));
    if (opts.sort) params.set("sort", opts.sort);
    const qs = params.toString();
    return this.request(`/runs/${runId}/iterations/${k}/population${qs ? `?${qs}` : ""}`);
  }

  getGates(runId: string, status?: "open" | "resolved"): Promise<Gate[]> {
    const qs = status ? `?status=${status}` : "";
    return this.request(`/runs/${runId}/gates${qs}`);
  }

  resolveGate(runId: string, gateId: string, body: GateResolutionBody): Promise<unknown> {
    return this.request(`/runs/${runId}/gates/${gateId}`, {
      method: "POST",
      body: JSON.stringify({ resolver: "ui", ...body }),
    });
  }

  /** Incremental events; the server long-polls when nothing is newer than `since`. */
  getEvents(runId: string, since: number): Promise<{ events: EventRecord[]; latest_seq: number }> {
    return this.request(`/runs/${runId}/events?since=${since}`);
  }

  abortRun(runId: string): Promise<unknown> {
    return this.request(`/runs/${runId}/abort`, { method: "POST" });
  }

  getRegistry(): Promise<RegistryDescriptor[]> {
    return this.request("/registry");
  }
}
