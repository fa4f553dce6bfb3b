/** DOM rendering: every component renders exclusively from server-provided
 * data and the view-model layer in state.ts. */

import type {
  AnalysisPayload,
  CandidateRecord,
  EventRecord,
  Gate,
  ObjectiveRecord,
  PopulationPage,
  RegistryDescriptor,
  RunSummary,
} from "./types.js";
import { gcFraction, histogram, type HistogramBin, type TrendPoint } from "./state.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function statusBadge(status: RunSummary["status"]): HTMLElement {
  return el("span", { class: `badge status-${status}` }, status.replace("_", " "));
}

export function runListTable(runs: RunSummary[], onOpen: (id: string) => void): HTMLElement {
  const table = el("table", { class: "table" });
  table.append(
    el(
      "tr",
      {},
      ...["run", "mode", "status", "iteration", "best aggregate", "updated"].map((h) =>
        el("th", {}, h),
      ),
    ),
  );
  for (const run of runs) {
    const row = el(
      "tr",
      { class: "clickable" },
      el("td", {}, el("a", { href: `#/runs/${run.run_id}` }, run.run_id)),
      el("td", {}, run.mode),
      el("td", {}, statusBadge(run.status)),
      el("td", {}, String(run.iteration)),
      el("td", {}, run.best_aggregate === null ? "-" : run.best_aggregate.toFixed(4)),
      el("td", {}, run.updated_at ?? "-"),
    );
    row.addEventListener("click", () => onOpen(run.run_id));
    table.append(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Dashboard charts (inline SVG; no chart library)
// ---------------------------------------------------------------------------

const SVG_NS = "http://www.w3.org/2000/svg";

export function trendChart(trend: TrendPoint[], markers: TrendPoint[]): SVGSVGElement {
  const width = 640;
  const height = 180;
  const pad = 28;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "trend");
  if (trend.length === 0) return svg;
  const xs = trend.map((_, i) => i);
  const ys = trend.flatMap((p) => [p.best, p.mean]);
  const yLo = Math.min(...ys);
  const yHi = Math.max(...ys) || 1;
  const x = (i: number) => pad + (i / Math.max(1, xs.length - 1)) * (width - 2 * pad);
  const y = (v: number) =>
    height - pad - ((v - yLo) / Math.max(1e-12, yHi - yLo)) * (height - 2 * pad);

  const path = (key: "best" | "mean", cls: string) => {
    const d = trend.map((p, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(1)},${y(p[key]).toFixed(1)}`);
    const line = document.createElementNS(SVG_NS, "path");
    line.setAttribute("d", d.join(" "));
    line.setAttribute("class", cls);
    svg.append(line);
  };
  path("mean", "line-mean");
  path("best", "line-best");

  for (const marker of markers) {
    const idx = trend.findIndex((p) => p.seq === marker.seq);
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", String(x(idx)));
    dot.setAttribute("cy", String(y(marker.best)));
    dot.setAttribute("r", "4");
    dot.setAttribute("class", "iteration-marker");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `iteration ${marker.iteration}: best ${marker.best.toFixed(4)}`;
    dot.append(title);
    svg.append(dot);
  }
  return svg;
}

export function histogramChart(bins: HistogramBin[], label: string): HTMLElement {
  const wrap = el("div", { class: "hist" }, el("div", { class: "hist-label" }, label));
  const max = Math.max(1, ...bins.map((b) => b.count));
  const bars = el("div", { class: "hist-bars" });
  for (const bin of bins) {
    const bar = el("div", { class: "hist-bar" });
    bar.style.height = `${(bin.count / max) * 100}%`;
    bar.title = `[${bin.lo.toFixed(3)}, ${bin.hi.toFixed(3)}): ${bin.count}`;
    bars.append(bar);
  }
  wrap.append(bars);
  return wrap;
}

export function objectiveHistograms(page: PopulationPage): HTMLElement {
  const wrap = el("div", { class: "hist-grid" });
  const objectiveIds = Object.keys(page.stats);
  for (const oid of objectiveIds) {
    const values = page.candidates
      .map((c) => c.scores[oid])
      .filter((v) => v !== undefined && Number.isFinite(v));
    wrap.append(histogramChart(histogram(values), oid));
  }
  return wrap;
}

export function eventTailView(events: EventRecord[]): HTMLElement {
  const wrap = el("div", { class: "event-tail" });
  for (const event of events.slice(-40).reverse()) {
    wrap.append(
      el(
        "div",
        { class: "event-row" },
        el("span", { class: "event-seq" }, `#${event.seq}`),
        el("span", { class: "event-type" }, event.type),
        el("span", { class: "event-iter" }, `iter ${event.iteration}`),
      ),
    );
  }
  return wrap;
}

// ---------------------------------------------------------------------------
// Payload preview with GC highlighting
// ---------------------------------------------------------------------------

export function sequenceView(text: string): HTMLElement {
  const wrap = el("div", { class: "seq" });
  for (const ch of text) {
    wrap.append(el("span", { class: ch === "G" || ch === "C" ? "base gc" : "base" }, ch));
  }
  wrap.append(el("span", { class: "seq-gc" }, ` GC ${(100 * gcFraction(text)).toFixed(1)}%`));
  return wrap;
}

export function candidateTable(
  page: PopulationPage,
  onSort: (key: string) => void,
  onSelect: (c: CandidateRecord) => void,
): HTMLElement {
  const objectiveIds = Object.keys(page.stats);
  const table = el("table", { class: "table" });
  const header = el("tr", {});
  for (const key of ["id", "aggregate", ...objectiveIds]) {
    const th = el("th", { class: "sortable" }, key);
    th.addEventListener("click", () => onSort(key === "id" ? "aggregate" : key));
    header.append(th);
  }
  table.append(header);
  for (const cand of page.candidates) {
    const row = el(
      "tr",
      { class: "clickable" },
      el("td", {}, cand.id),
      el("td", {}, cand.aggregate === null ? "-" : cand.aggregate.toFixed(4)),
      ...objectiveIds.map((oid) =>
        el("td", {}, cand.scores[oid] === undefined ? "-" : cand.scores[oid].toFixed(4)),
      ),
    );
    row.addEventListener("click", () => onSelect(cand));
    table.append(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Gate editors
// ---------------------------------------------------------------------------

export interface PlanEditorCallbacks {
  onUpdate(index: number, patch: Partial<ObjectiveRecord>): void;
  onRemove(index: number): void;
  onAdd(descriptor: RegistryDescriptor): void;
  onAccept(): void;
  onSubmitRevision(): void;
}

export function planGateEditor(
  objectives: ObjectiveRecord[],
  registry: RegistryDescriptor[],
  errors: string[],
  dirty: boolean,
  cb: PlanEditorCallbacks,
): HTMLElement {
  const wrap = el("div", { class: "panel" }, el("h3", {}, "proposed objectives"));
  const table = el("table", { class: "table" });
  table.append(
    el(
      "tr",
      {},
      ...["id", "name", "description", "kind", "direction", "weight", ""].map((h) => el("th", {}, h)),
    ),
  );
  objectives.forEach((obj, index) => {
    const idInput = el("input", { value: obj.id }) as HTMLInputElement;
    idInput.addEventListener("change", () => cb.onUpdate(index, { id: idInput.value }));
    const nameInput = el("input", { value: obj.name }) as HTMLInputElement;
    nameInput.addEventListener("change", () => cb.onUpdate(index, { name: nameInput.value }));
    const descInput = el("input", { value: obj.description }) as HTMLInputElement;
    descInput.addEventListener("change", () =>
      cb.onUpdate(index, { description: descInput.value }),
    );
    const dirSelect = el("select", {}) as HTMLSelectElement;
    for (const option of ["maximize", "minimize", "not_applicable"]) {
      const opt = el("option", { value: option }, option) as HTMLOptionElement;
      if (option === obj.direction) opt.selected = true;
      dirSelect.append(opt);
    }
    dirSelect.addEventListener("change", () =>
      cb.onUpdate(index, { direction: dirSelect.value as ObjectiveRecord["direction"] }),
    );
    const weightInput = el("input", {
      value: obj.weight === null || obj.weight === undefined ? "" : String(obj.weight),
      placeholder: "1.0",
    }) as HTMLInputElement;
    weightInput.addEventListener("change", () =>
      cb.onUpdate(index, { weight: weightInput.value === "" ? null : Number(weightInput.value) }),
    );
    const removeBtn = el("button", { class: "btn small" }, "delete");
    removeBtn.addEventListener("click", () => cb.onRemove(index));
    table.append(
      el(
        "tr",
        {},
        el("td", {}, idInput),
        el("td", {}, nameInput),
        el("td", {}, descInput),
        el("td", {}, obj.kind),
        el("td", {}, dirSelect),
        el("td", {}, weightInput),
        el("td", {}, removeBtn),
      ),
    );
  });
  wrap.append(table);

  const addRow = el("div", { class: "add-row" });
  const select = el("select", {}) as HTMLSelectElement;
  for (const descriptor of registry) {
    select.append(
      el(
        "option",
        { value: descriptor.descriptor_id },
        `${descriptor.descriptor_id} (${descriptor.kind})`,
      ),
    );
  }
  const addBtn = el("button", { class: "btn" }, "add from registry");
  addBtn.addEventListener("click", () => {
    const descriptor = registry.find((d) => d.descriptor_id === select.value);
    if (descriptor) cb.onAdd(descriptor);
  });
  addRow.append(select, addBtn);
  wrap.append(addRow);

  if (errors.length) {
    wrap.append(
      el("div", { class: "errors" }, ...errors.map((e) => el("div", { class: "error" }, e))),
    );
  }
  const actions = el("div", { class: "actions" });
  const accept = el("button", { class: "btn primary" }, "Accept");
  accept.addEventListener("click", cb.onAccept);
  const revise = el("button", { class: "btn" }, "Submit revision") as HTMLButtonElement;
  revise.disabled = !dirty || errors.length > 0;
  revise.addEventListener("click", cb.onSubmitRevision);
  actions.append(accept, revise);
  wrap.append(actions);
  return wrap;
}

export interface AnalysisViewerCallbacks {
  onAccept(): void;
  onRevise(feedback: string): void;
}

export function analysisGateViewer(
  report: AnalysisPayload,
  cb: AnalysisViewerCallbacks,
): HTMLElement {
  const wrap = el("div", { class: "panel" });
  const sections: [string, string][] = [
    ["overview", report.overview],
    ["performance analysis", report.performance_analysis],
    ["issues and concerns", report.issues_and_concerns],
    ["strategic recommendations", report.strategic_recommendations],
  ];
  for (const [title, body] of sections) {
    wrap.append(el("h3", {}, title), el("p", { class: "report-text" }, body));
  }

  const stats = el("table", { class: "table" });
  stats.append(
    el("tr", {}, ...["objective", "mean", "std", "min", "max", "delta"].map((h) => el("th", {}, h))),
  );
  for (const [oid, s] of Object.entries(report.objective_stats)) {
    stats.append(
      el(
        "tr",
        {},
        el("td", {}, oid),
        el("td", {}, s.mean.toFixed(4)),
        el("td", {}, s.std.toFixed(4)),
        el("td", {}, s.min.toFixed(4)),
        el("td", {}, s.max.toFixed(4)),
        el("td", {}, s.delta_vs_previous === undefined ? "-" : s.delta_vs_previous.toFixed(4)),
      ),
    );
  }
  wrap.append(el("h3", {}, "objective statistics"), stats);

  wrap.append(
    el("h3", {}, `termination: ${report.termination}`),
    el("p", { class: "report-text" }, report.termination_reason),
  );

  const feedback = el("textarea", {
    placeholder: "feedback appended to strategic recommendations...",
  }) as HTMLTextAreaElement;
  const actions = el("div", { class: "actions" });
  const accept = el("button", { class: "btn primary" }, "Accept");
  accept.addEventListener("click", cb.onAccept);
  const revise = el("button", { class: "btn" }, "Submit feedback revision");
  revise.addEventListener("click", () => cb.onRevise(feedback.value));
  actions.append(accept, revise);
  wrap.append(el("h3", {}, "reviewer feedback"), feedback, actions);
  return wrap;
}

export function banner(message: string, kind: "error" | "info"): HTMLElement {
  return el("div", { class: `banner ${kind}` }, message);
}

export function gateList(gates: Gate[], onOpen: (g: Gate) => void): HTMLElement {
  const wrap = el("div", { class: "panel" }, el("h3", {}, "open gates"));
  if (gates.length === 0) wrap.append(el("p", { class: "muted" }, "no gates awaiting approval"));
  for (const gate of gates) {
    const row = el(
      "div",
      { class: "gate-row clickable" },
      el("span", { class: "badge" }, gate.stage),
      el("span", {}, `${gate.gate_id} (iteration ${gate.iteration})`),
    );
    row.addEventListener("click", () => onOpen(gate));
    wrap.append(row);
  }
  return wrap;
}
