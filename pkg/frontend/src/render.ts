import type { PairPayload, SummaryPayload } from "./types";
import { ATTRIBUTES, CATEGORY_FIELDS } from "./types";
import type { PairReviewState, ToggleState } from "./state";
import { reportKey, toggleKey } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function toggleGlyph(state: ToggleState): string {
  if (state === "correct") return "✓";
  if (state === "incorrect") return "✗";
  return "·";
}

export interface RenderHandlers {
  onCycle: (label: string, reportIndex: number, attribute: (typeof ATTRIBUTES)[number]) => void;
  onReportCycle: (category: string, reportIndex: number) => void;
  onModeSwitch: () => void;
  onSubmit: () => void;
}

export function renderPair(
  container: HTMLElement,
  payload: PairPayload,
  state: PairReviewState,
  handlers: RenderHandlers,
): void {
  container.replaceChildren();

  const reports = el("div", "reports");
  for (const [title, report] of [
    ["Baseline", payload.baseline],
    ["Follow-up", payload.followup],
  ] as const) {
    const column = el("section", "report-column");
    column.appendChild(el("h3", undefined, `${title} (${report.study_uid}, ${report.study_date})`));
    const pre = el("pre", "report-body");
    pre.textContent = report.body;
    column.appendChild(pre);
    reports.appendChild(column);
  }
  container.appendChild(reports);

  if (!payload.extraction) {
    container.appendChild(el("p", "error-banner", "No extraction available for this pair."));
    return;
  }

  const controls = el("div", "controls");
  const modeButton = el("button", "mode-switch",
    state.mode === "attribute" ? "Switch to report-level review" : "Switch to attribute review");
  modeButton.addEventListener("click", handlers.onModeSwitch);
  controls.appendChild(modeButton);
  container.appendChild(controls);

  if (state.mode === "attribute") {
    container.appendChild(renderAttributeTable(state, handlers));
  } else {
    container.appendChild(renderReportTable(state, handlers));
  }

  const submit = el("button", "submit");
  submit.textContent = state.allSet()
    ? "Submit judgments"
    : `Submit blocked: ${state.unsetCount()} unset`;
  submit.disabled = !state.allSet();
  submit.addEventListener("click", handlers.onSubmit);
  container.appendChild(submit);
}

function renderAttributeTable(state: PairReviewState, handlers: RenderHandlers): HTMLElement {
  const wrapper = el("div", "lesion-tables");
  for (const [category] of CATEGORY_FIELDS) {
    const rows = state.rows.filter((row) => row.category === category);
    const section = el("section", "category-section");
    section.appendChild(el("h4", undefined, category));
    if (rows.length === 0) {
      section.appendChild(el("p", "none-extracted", "none extracted"));
      wrapper.appendChild(section);
      continue;
    }
    const table = el("table", "lesion-table");
    const head = el("tr");
    head.appendChild(el("th", undefined, "label"));
    for (const side of ["baseline", "follow-up"]) {
      head.appendChild(el("th", undefined, `${side} size`));
      head.appendChild(el("th", undefined, `${side} se-ima`));
      for (const attribute of ATTRIBUTES) {
        head.appendChild(el("th", "toggle-head", `${side[0]}:${attribute}`));
      }
    }
    table.appendChild(head);
    for (const row of rows) {
      const tr = el("tr");
      tr.appendChild(el("td", "lesion-label", row.label));
      row.sides.forEach((side, reportIndex) => {
        tr.appendChild(el("td", undefined, side?.current_size_mm?.toString() ?? "null"));
        tr.appendChild(el("td", undefined, side?.se_ima ?? "null"));
        for (const attribute of ATTRIBUTES) {
          const cell = el("td", "toggle-cell");
          if (side !== null) {
            const current = state.toggles.get(toggleKey(row.label, reportIndex, attribute)) ?? null;
            const button = el("button", `toggle toggle-${current ?? "unset"}`,
              toggleGlyph(current));
            button.dataset.toggle = toggleKey(row.label, reportIndex, attribute);
            button.addEventListener("click", () =>
              handlers.onCycle(row.label, reportIndex, attribute));
            cell.appendChild(button);
          }
          tr.appendChild(cell);
        }
      });
      table.appendChild(tr);
    }
    section.appendChild(table);
    wrapper.appendChild(section);
  }
  return wrapper;
}

function renderReportTable(state: PairReviewState, handlers: RenderHandlers): HTMLElement {
  const table = el("table", "report-table");
  const head = el("tr");
  for (const text of ["category", "baseline", "follow-up"]) {
    head.appendChild(el("th", undefined, text));
  }
  table.appendChild(head);
  for (const [category] of CATEGORY_FIELDS) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, category));
    for (const reportIndex of [0, 1]) {
      const cell = el("td");
      const current = state.reportToggles.get(reportKey(category, reportIndex)) ?? null;
      const button = el("button", `toggle toggle-${current ?? "unset"}`,
        current ?? "unset");
      button.addEventListener("click", () => handlers.onReportCycle(category, reportIndex));
      cell.appendChild(button);
      tr.appendChild(cell);
    }
    table.appendChild(tr);
  }
  return table;
}

export function renderStatusBar(
  container: HTMLElement,
  progressLabel: string,
  syncStatus: string,
  syncDetail: string | null,
): void {
  container.replaceChildren();
  container.appendChild(el("span", "progress", progressLabel));
  const badge = el("span", `sync sync-${syncStatus}`, syncStatus);
  if (syncDetail) badge.title = syncDetail;
  container.appendChild(badge);
}

export function renderSummary(container: HTMLElement, summary: SummaryPayload): void {
  container.replaceChildren();
  const table = el("table", "summary-table");
  const head = el("tr");
  for (const text of ["category", "level", "k", "n", "accuracy", "95% CI"]) {
    head.appendChild(el("th", undefined, text));
  }
  table.appendChild(head);
  for (const category of Object.keys(summary.cells).sort()) {
    const levels = summary.cells[category] ?? {};
    for (const level of Object.keys(levels).sort()) {
      const cell = levels[level];
      if (!cell) continue;
      const tr = el("tr");
      tr.appendChild(el("td", undefined, category));
      tr.appendChild(el("td", undefined, level));
      tr.appendChild(el("td", undefined, String(cell.k)));
      tr.appendChild(el("td", undefined, String(cell.n)));
      tr.appendChild(el("td", undefined, cell.accuracy.toFixed(3)));
      tr.appendChild(el("td", undefined,
        `${cell.ci_low.toFixed(3)}–${cell.ci_high.toFixed(3)}`));
      table.appendChild(tr);
    }
  }
  container.appendChild(table);
  const pairs = summary.all_attribute_pairs;
  container.appendChild(el("p", undefined,
    `pairs fully correct: ${pairs.k}/${pairs.n} (${pairs.accuracy.toFixed(3)})`));
  if (summary.agreement_rate !== null) {
    container.appendChild(el("p", undefined,
      `inter-reader lesion agreement: ${summary.agreement_rate.toFixed(3)}`));
  }
}
