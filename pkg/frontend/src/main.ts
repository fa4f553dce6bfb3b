/** Hash-routed single-page steering app: run list, run dashboard with gates,
 * and the candidate explorer. State flows one way: poll server -> view
 * models -> DOM. Mutations go through the API client only. */

import { ApiClient, ApiError } from "./api.js";
import {
  aggregateTrend,
  analysisRevision,
  ConnectionState,
  EventTail,
  iterationMarkers,
  PlanEditor,
} from "./state.js";
import {
  analysisGateViewer,
  banner,
  candidateTable,
  el,
  eventTailView,
  gateList,
  objectiveHistograms,
  planGateEditor,
  runListTable,
  sequenceView,
  statusBadge,
  trendChart,
} from "./render.js";
import type { AnalysisPayload, CandidateRecord, Gate, RegistryDescriptor } from "./types.js";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient({
  baseUrl: params.get("api") ?? window.location.origin,
  token: params.get("token") ?? localStorage.getItem("bilevo_token") ?? undefined,
});

const root = document.getElementById("app")!;
const connection = new ConnectionState();
let registry: RegistryDescriptor[] = [];
let pollTimer: number | undefined;

function setView(...nodes: (Node | string)[]): void {
  root.replaceChildren(...nodes);
}

function connectionBanner(): HTMLElement | null {
  return connection.online ? null : banner("connection lost; retrying...", "error");
}

// ---------------------------------------------------------------------------
// Run list page
// ---------------------------------------------------------------------------

async function showRunList(): Promise<void> {
  try {
    const runs = await api.listRuns();
    connection.noteSuccess();
    const createForm = el("div", { class: "panel" }, el("h3", {}, "create run"));
    const textarea = el("textarea", {
      placeholder: "paste a run config as JSON...",
      rows: "8",
    }) as HTMLTextAreaElement;
    const submit = el("button", { class: "btn primary" }, "POST /runs");
    const message = el("div", { class: "muted" });
    submit.addEventListener("click", async () => {
      try {
        const summary = await api.createRun(JSON.parse(textarea.value));
        window.location.hash = `#/runs/${summary.run_id}`;
      } catch (err) {
        message.textContent = err instanceof Error ? err.message : String(err);
      }
    });
    createForm.append(textarea, submit, message);
    setView(
      el("h2", {}, "runs"),
      ...(connectionBanner() ? [connectionBanner()!] : []),
      runListTable(runs, (id) => (window.location.hash = `#/runs/${id}`)),
      createForm,
    );
  } catch {
    const delay = connection.noteFailure();
    setView(el("h2", {}, "runs"), connectionBanner()!);
    window.setTimeout(showRunList, delay);
  }
}

// ---------------------------------------------------------------------------
// Run dashboard
// ---------------------------------------------------------------------------

async function showRun(runId: string): Promise<void> {
  const tail = new EventTail(400);
  let active = true;
  window.addEventListener("hashchange", () => (active = false), { once: true });

  const render = async () => {
    if (!active) return;
    try {
      const [summary, gates] = await Promise.all([api.getRun(runId), api.getGates(runId, "open")]);
      const batch = await api.getEvents(runId, tail.latestSeq);
      tail.push(batch.events);
      connection.noteSuccess();

      const trend = aggregateTrend(tail.events);
      const markers = iterationMarkers(trend);
      const header = el(
        "div",
        { class: "run-header" },
        el("h2", {}, runId),
        statusBadge(summary.status),
        el("span", { class: "muted" }, `mode ${summary.mode}, iteration ${summary.iteration}`),
        el(
          "a",
          { href: `#/runs/${runId}/population/${Math.max(0, summary.iteration - 1)}` },
          "candidate explorer",
        ),
      );
      const abortBtn = el("button", { class: "btn danger" }, "abort");
      abortBtn.addEventListener("click", () => api.abortRun(runId));
      header.append(abortBtn);

      const nodes: (Node | string)[] = [header];
      const conn = connectionBanner();
      if (conn) nodes.push(conn);

      nodes.push(gateList(gates, (gate) => showGate(runId, gate)));
      nodes.push(
        el(
          "div",
          { class: "panel" },
          el("h3", {}, "best / mean aggregate by generation"),
          trendChart(trend, markers),
          el(
            "div",
            { class: "muted" },
            `${markers.length} iteration marker(s): ` +
              markers.map((m) => `iter ${m.iteration} best ${m.best.toFixed(4)}`).join(", "),
          ),
        ),
      );
      try {
        const page = await api.getPopulation(runId, Math.max(0, summary.iteration - 1), {
          limit: 200,
        });
        nodes.push(
          el(
            "div",
            { class: "panel" },
            el("h3", {}, "objective score distributions"),
            objectiveHistograms(page),
          ),
        );
      } catch {
        /* population not written yet */
      }
      nodes.push(el("div", { class: "panel" }, el("h3", {}, "event tail"), eventTailView(tail.events)));
      setView(...nodes);

      const delay = summary.status === "finished" || summary.status === "failed" ? 5000 : 500;
      pollTimer = window.setTimeout(render, delay);
    } catch {
      const delay = connection.noteFailure();
      pollTimer = window.setTimeout(render, delay);
    }
  };
  await render();
}

// ---------------------------------------------------------------------------
// Gate pages
// ---------------------------------------------------------------------------

async function showGate(runId: string, gate: Gate): Promise<void> {
  if (pollTimer) window.clearTimeout(pollTimer);
  const back = () => {
    window.location.hash = `#/runs/${runId}`;
    void route();
  };
  const onConflict = (err: unknown) => {
    if (err instanceof ApiError && err.status === 409) {
      setView(
        banner("another resolver got there first; refreshing the gate list", "info"),
        el("a", { href: `#/runs/${runId}` }, "back to run"),
      );
      window.setTimeout(back, 1200);
      return true;
    }
    return false;
  };

  if (gate.stage === "plan") {
    const editor = new PlanEditor(gate);
    const rerender = () => {
      setView(
        el("h2", {}, `plan gate ${gate.gate_id}`),
        planGateEditor(editor.objectives, registry, editor.validate(), editor.isDirty(), {
          onUpdate: (i, patch) => {
            editor.update(i, patch);
            rerender();
          },
          onRemove: (i) => {
            editor.remove(i);
            rerender();
          },
          onAdd: (descriptor) => {
            editor.addFromRegistry(descriptor);
            rerender();
          },
          onAccept: async () => {
            try {
              await api.resolveGate(runId, gate.gate_id, { action: "accept" });
              back();
            } catch (err) {
              if (!onConflict(err)) throw err;
            }
          },
          onSubmitRevision: async () => {
            try {
              await api.resolveGate(runId, gate.gate_id, {
                action: "revise",
                payload: editor.revisionPayload(),
              });
              back();
            } catch (err) {
              if (!onConflict(err)) throw err;
            }
          },
        }),
      );
    };
    rerender();
    return;
  }

  const report = gate.proposed_payload as AnalysisPayload;
  const top = el("div", { class: "panel" }, el("h3", {}, "top candidates"));
  for (const [cid, agg] of report.top_candidates) {
    top.append(el("div", { class: "muted" }, `${cid}: aggregate ${agg.toFixed(4)}`));
  }
  setView(
    el("h2", {}, `analysis gate ${gate.gate_id}`),
    analysisGateViewer(report, {
      onAccept: async () => {
        try {
          await api.resolveGate(runId, gate.gate_id, { action: "accept" });
          back();
        } catch (err) {
          if (!onConflict(err)) throw err;
        }
      },
      onRevise: async (feedback) => {
        try {
          await api.resolveGate(runId, gate.gate_id, {
            action: "revise",
            payload: analysisRevision(report, feedback),
          });
          back();
        } catch (err) {
          if (!onConflict(err)) throw err;
        }
      },
    }),
    top,
  );
}

// ---------------------------------------------------------------------------
// Candidate explorer
// ---------------------------------------------------------------------------

async function showPopulation(runId: string, iteration: number): Promise<void> {
  let offset = 0;
  let sort = "aggregate";
  const limit = 50;
  let detail: CandidateRecord | null = null;

  const render = async () => {
    try {
      const page = await api.getPopulation(runId, iteration, { limit, offset, sort });
      connection.noteSuccess();
      const pager = el("div", { class: "actions" });
      const prev = el("button", { class: "btn small" }, "prev") as HTMLButtonElement;
      const next = el("button", { class: "btn small" }, "next") as HTMLButtonElement;
      prev.disabled = offset === 0;
      next.disabled = offset + limit >= page.total;
      prev.addEventListener("click", () => {
        offset = Math.max(0, offset - limit);
        void render();
      });
      next.addEventListener("click", () => {
        offset += limit;
        void render();
      });
      pager.append(
        prev,
        el("span", { class: "muted" }, `${offset + 1}-${offset + page.candidates.length} of ${page.total}`),
        next,
      );
      const detailPane = el("div", { class: "panel" }, el("h3", {}, "payload detail"));
      if (detail) {
        detailPane.append(el("div", { class: "muted" }, detail.id));
        if (detail.payload.kind === "sequence" && detail.payload.text) {
          detailPane.append(sequenceView(detail.payload.text));
        } else {
          detailPane.append(el("pre", {}, JSON.stringify(detail.payload, null, 2)));
        }
        detailPane.append(el("pre", {}, JSON.stringify(detail.scores, null, 2)));
      } else {
        detailPane.append(el("p", { class: "muted" }, "click a row to inspect its payload"));
      }
      setView(
        el("h2", {}, `${runId} population, iteration ${iteration}`),
        el("a", { href: `#/runs/${runId}` }, "back to run"),
        pager,
        candidateTable(
          page,
          (key) => {
            sort = key;
            void render();
          },
          (cand) => {
            detail = cand;
            void render();
          },
        ),
        detailPane,
      );
    } catch {
      const delay = connection.noteFailure();
      setView(connectionBanner()!);
      window.setTimeout(render, delay);
    }
  };
  await render();
}

// ---------------------------------------------------------------------------
// Router
// ---------------------------------------------------------------------------

async function route(): Promise<void> {
  if (pollTimer) window.clearTimeout(pollTimer);
  const hash = window.location.hash || "#/";
  const population = hash.match(/^#\/runs\/([^/]+)\/population\/(\d+)$/);
  const run = hash.match(/^#\/runs\/([^/]+)$/);
  if (population) await showPopulation(population[1], Number(population[2]));
  else if (run) await showRun(run[1]);
  else await showRunList();
}

async function boot(): Promise<void> {
  try {
    registry = await api.getRegistry();
  } catch {
    registry = [];
  }
  window.addEventListener("hashchange", () => void route());
  await route();
}

void boot();
