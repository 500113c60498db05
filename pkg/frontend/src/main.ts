import { ApiError, ReviewApi } from "./api";
import { renderPair, renderStatusBar, renderSummary } from "./render";
import {
  PairReviewState,
  SessionProgress,
  SubmissionQueue,
} from "./state";
import type { Attribute, PairListItem, PairPayload } from "./types";
import { ATTRIBUTES } from "./types";

interface AppState {
  api: ReviewApi;
  readerId: string;
  pairs: PairListItem[];
  index: number;
  payload: PairPayload | null;
  review: PairReviewState | null;
  queue: SubmissionQueue;
  progress: SessionProgress;
  cursor: { row: number; report: number; attribute: number };
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function loadPair(app: AppState): Promise<void> {
  const item = app.pairs[app.index];
  if (!item) return;
  app.payload = await app.api.getPair(item.pair_id, app.readerId);
  app.review = app.payload.extraction
    ? new PairReviewState(app.payload.pair_id, app.payload.extraction)
    : null;
  app.cursor = { row: 0, report: 0, attribute: 0 };
  redraw(app);
}

function redraw(app: AppState): void {
  const header = byId("status");
  renderStatusBar(header, `pair ${app.index + 1}/${app.pairs.length} — ${app.progress.label}`,
    app.queue.status, app.queue.lastError);
  const main = byId("pair");
  if (!app.payload || !app.review) {
    main.replaceChildren();
    main.textContent = "loading…";
    return;
  }
  const review = app.review;
  renderPair(main, app.payload, review, {
    onCycle: (label, reportIndex, attribute) => {
      review.cycleToggle(label, reportIndex, attribute);
      redraw(app);
    },
    onReportCycle: (category, reportIndex) => {
      const key = `${category}|${reportIndex}`;
      const current = review.reportToggles.get(key) ?? null;
      const next = current === null ? "clean" : current === "clean" ? "has_errors" : null;
      review.setReportToggle(category as never, reportIndex, next);
      redraw(app);
    },
    onModeSwitch: () => {
      review.mode = review.mode === "attribute" ? "report" : "attribute";
      redraw(app);
    },
    onSubmit: () => void submit(app),
  });
}

async function submit(app: AppState): Promise<void> {
  if (!app.review || !app.review.allSet()) return;
  app.queue.enqueue(app.review.toJudgments(app.readerId));
  redraw(app);
  await app.queue.flush((judgment) => app.api.postJudgment(judgment));
  if (app.queue.status === "synced") {
    app.progress.markJudged(app.review.pairId);
    if (app.index + 1 < app.pairs.length) {
      app.index += 1;
      await loadPair(app);
      return;
    }
  }
  redraw(app);
}

/** Keyboard-first navigation: the review volume makes the mouse slow. */
function bindKeys(app: AppState): void {
  document.addEventListener("keydown", (event) => {
    const review = app.review;
    if (!review) return;
    const grid = review.rows;
    const cursor = app.cursor;
    const currentRow = grid[cursor.row];
    const move = (dr: number) => {
      cursor.row = Math.min(Math.max(cursor.row + dr, 0), Math.max(grid.length - 1, 0));
    };
    switch (event.key) {
      case "j": case "ArrowDown": move(1); break;
      case "k": case "ArrowUp": move(-1); break;
      case "h": case "ArrowLeft":
        cursor.attribute = (cursor.attribute + ATTRIBUTES.length - 1) % ATTRIBUTES.length;
        break;
      case "l": case "ArrowRight":
        cursor.attribute = (cursor.attribute + 1) % ATTRIBUTES.length;
        break;
      case "b": cursor.report = cursor.report === 0 ? 1 : 0; break;
      case "c": case "x": case " ": {
        if (!currentRow) return;
        const side = currentRow.sides[cursor.report as 0 | 1];
        if (!side) return;
        const attribute = ATTRIBUTES[cursor.attribute] as Attribute;
        if (event.key === "c") {
          review.setToggle(currentRow.label, cursor.report, attribute, "correct");
        } else if (event.key === "x") {
          review.setToggle(currentRow.label, cursor.report, attribute, "incorrect");
        } else {
          review.cycleToggle(currentRow.label, cursor.report, attribute);
        }
        break;
      }
      case "Enter":
        void submit(app);
        return;
      case "n":
        if (app.index + 1 < app.pairs.length) {
          app.index += 1;
          void loadPair(app);
        }
        return;
      case "p":
        if (app.index > 0) {
          app.index -= 1;
          void loadPair(app);
        }
        return;
      default:
        return;
    }
    event.preventDefault();
    redraw(app);
  });
}

async function showSummary(app: AppState): Promise<void> {
  const target = byId("summary");
  try {
    const summary = await app.api.summary([app.readerId]);
    renderSummary(target, summary);
  } catch (error) {
    target.textContent = error instanceof ApiError && error.status === 409
      ? "no judgments recorded yet"
      : `summary unavailable: ${error}`;
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const readerId = params.get("reader") ?? "reader1";
  const base = params.get("base") ?? "";
  const probe = new ReviewApi(base, "probe");
  const health = await probe.health();
  const api = new ReviewApi(base, params.get("run") ?? health.run_id);
  const pairs = await api.listPairs();
  const app: AppState = {
    api,
    readerId,
    pairs,
    index: 0,
    payload: null,
    review: null,
    queue: new SubmissionQueue(),
    progress: new SessionProgress(pairs.length),
    cursor: { row: 0, report: 0, attribute: 0 },
  };
  byId("reader").textContent = `reader: ${readerId}`;
  byId("show-summary").addEventListener("click", () => void showSummary(app));
  bindKeys(app);
  await loadPair(app);
}

void boot();
