import {
  ATTRIBUTES,
  CATEGORY_FIELDS,
  type Attribute,
  type Category,
  type JudgmentRecord,
  type Lesion,
  type PairExtraction,
  type ReportVerdict,
  type Verdict,
} from "./types";

export type GranularityMode = "attribute" | "report";
export type ToggleState = Verdict | null;

/** One lesion entity merged across the two reports by its label. */
export interface LesionRow {
  label: string;
  category: Category;
  sides: [Lesion | null, Lesion | null];
}

export function buildRows(extraction: PairExtraction): LesionRow[] {
  const rows: LesionRow[] = [];
  for (const [category, field] of CATEGORY_FIELDS) {
    const byLabel = new Map<string, LesionRow>();
    extraction.reports.forEach((report, reportIndex) => {
      for (const lesion of report[field] as Lesion[]) {
        const label = lesion.label ?? `(?${category})`;
        let row = byLabel.get(label);
        if (!row) {
          row = { label, category, sides: [null, null] };
          byLabel.set(label, row);
          rows.push(row);
        }
        row.sides[reportIndex as 0 | 1] = lesion;
      }
    });
  }
  return rows;
}

export function toggleKey(label: string, reportIndex: number, attribute: Attribute): string {
  return `${label}|${reportIndex}|${attribute}`;
}

export function reportKey(category: Category, reportIndex: number): string {
  return `${category}|${reportIndex}`;
}

const CYCLE: ToggleState[] = [null, "correct", "incorrect"];

export class IncompleteReviewError extends Error {}

/**
 * Review state of one pair: tri-state toggles defaulting to unset so a
 * reader must actively mark every attribute; submission stays blocked
 * until the visible grid is complete.
 */
export class PairReviewState {
  readonly rows: LesionRow[];
  readonly toggles = new Map<string, ToggleState>();
  readonly reportToggles = new Map<string, ReportVerdict | null>();
  mode: GranularityMode;

  constructor(
    public readonly pairId: string,
    extraction: PairExtraction,
    mode: GranularityMode = "attribute",
  ) {
    this.rows = buildRows(extraction);
    this.mode = mode;
    for (const row of this.rows) {
      row.sides.forEach((side, reportIndex) => {
        if (side === null) return;
        for (const attribute of ATTRIBUTES) {
          this.toggles.set(toggleKey(row.label, reportIndex, attribute), null);
        }
      });
    }
    for (const [category] of CATEGORY_FIELDS) {
      for (const reportIndex of [0, 1]) {
        this.reportToggles.set(reportKey(category, reportIndex), null);
      }
    }
  }

  setToggle(label: string, reportIndex: number, attribute: Attribute, state: ToggleState): void {
    const key = toggleKey(label, reportIndex, attribute);
    if (!this.toggles.has(key)) {
      throw new Error(`no toggle for ${key}`);
    }
    this.toggles.set(key, state);
  }

  cycleToggle(label: string, reportIndex: number, attribute: Attribute): ToggleState {
    const key = toggleKey(label, reportIndex, attribute);
    const current = this.toggles.get(key);
    if (current === undefined) {
      throw new Error(`no toggle for ${key}`);
    }
    const next = CYCLE[(CYCLE.indexOf(current) + 1) % CYCLE.length] ?? null;
    this.toggles.set(key, next);
    return next;
  }

  setReportToggle(category: Category, reportIndex: number, verdict: ReportVerdict | null): void {
    this.reportToggles.set(reportKey(category, reportIndex), verdict);
  }

  toggleCount(): number {
    return this.mode === "attribute" ? this.toggles.size : this.reportToggles.size;
  }

  unsetCount(): number {
    const source = this.mode === "attribute" ? this.toggles : this.reportToggles;
    let unset = 0;
    for (const state of source.values()) {
      if (state === null) unset += 1;
    }
    return unset;
  }

  /** Submission gate: every visible control must carry a verdict. */
  allSet(): boolean {
    return this.unsetCount() === 0;
  }

  markAll(verdict: Verdict): void {
    for (const key of this.toggles.keys()) {
      this.toggles.set(key, verdict);
    }
    for (const key of this.reportToggles.keys()) {
      this.reportToggles.set(key, verdict === "correct" ? "clean" : "has_errors");
    }
  }

  /** Materialize judgments; never emits an unset verdict. */
  toJudgments(readerId: string): JudgmentRecord[] {
    if (!this.allSet()) {
      throw new IncompleteReviewError(
        `${this.unsetCount()} of ${this.toggleCount()} controls still unset`,
      );
    }
    const out: JudgmentRecord[] = [];
    if (this.mode === "attribute") {
      for (const row of this.rows) {
        row.sides.forEach((side, reportIndex) => {
          if (side === null) return;
          for (const attribute of ATTRIBUTES) {
            const verdict = this.toggles.get(toggleKey(row.label, reportIndex, attribute));
            if (verdict == null) throw new IncompleteReviewError("unset toggle");
            out.push({
              kind: "attribute",
              pair_id: this.pairId,
              reader_id: readerId,
              lesion_label: row.label,
              category: row.category,
              report_index: reportIndex as 0 | 1,
              attribute,
              verdict,
            });
          }
        });
      }
    } else {
      for (const [category] of CATEGORY_FIELDS) {
        for (const reportIndex of [0, 1] as const) {
          const verdict = this.reportToggles.get(reportKey(category, reportIndex));
          if (verdict == null) throw new IncompleteReviewError("unset report toggle");
          out.push({
            kind: "report",
            pair_id: this.pairId,
            reader_id: readerId,
            category,
            report_index: reportIndex,
            verdict,
          });
        }
      }
    }
    return out;
  }
}

export type SyncStatus = "synced" | "pending" | "error";

/**
 * Ordered submission queue: one POST per judgment, optimistic progress,
 * and failures keep everything from the failed item onward so a
 * reconnect flushes in the original order.
 */
export class SubmissionQueue {
  private readonly items: JudgmentRecord[] = [];
  status: SyncStatus = "synced";
  lastError: string | null = null;

  enqueue(judgments: JudgmentRecord[]): void {
    this.items.push(...judgments);
    if (this.items.length > 0) this.status = "pending";
  }

  get pending(): number {
    return this.items.length;
  }

  snapshot(): JudgmentRecord[] {
    return [...this.items];
  }

  async flush(post: (judgment: JudgmentRecord) => Promise<void>): Promise<number> {
    let sent = 0;
    while (this.items.length > 0) {
      const head = this.items[0]!;
      try {
        await post(head);
      } catch (error) {
        this.status = "error";
        this.lastError = error instanceof Error ? error.message : String(error);
        return sent;
      }
      this.items.shift();
      sent += 1;
    }
    this.status = "synced";
    this.lastError = null;
    return sent;
  }
}

/** Pair-level progress: judged / total. */
export class SessionProgress {
  private judged = new Set<string>();

  constructor(public readonly totalPairs: number) {}

  markJudged(pairId: string): void {
    this.judged.add(pairId);
  }

  get judgedCount(): number {
    return this.judged.size;
  }

  get label(): string {
    return `${this.judgedCount}/${this.totalPairs} pairs judged`;
  }
}
