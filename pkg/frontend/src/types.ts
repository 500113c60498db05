export type Category = "TL" | "NTL" | "NL";
export type Attribute = "label" | "size" | "se_ima";
export type Verdict = "correct" | "incorrect";
export type ReportVerdict = "clean" | "has_errors";

export interface Lesion {
  label: string | null;
  description: string | null;
  current_size_mm: number | null;
  se_ima: string | null;
  note: string | null;
}

export interface ReportExtraction {
  study_uid: string;
  target_lesions: Lesion[];
  non_target_lesions: Lesion[];
  new_lesions: Lesion[];
}

export interface PairExtraction {
  reports: ReportExtraction[];
}

export interface ReportPayload {
  study_uid: string;
  study_date: string;
  body: string;
}

export interface PairPayload {
  pair_id: string;
  baseline: ReportPayload;
  followup: ReportPayload;
  extraction: PairExtraction | null;
  judgments: JudgmentRecord[];
}

export interface PairListItem {
  pair_id: string;
  status: string;
  has_extraction: boolean;
}

export interface AttributeJudgmentRecord {
  kind: "attribute";
  pair_id: string;
  reader_id: string;
  lesion_label: string;
  category: Category;
  report_index: 0 | 1;
  attribute: Attribute;
  verdict: Verdict;
}

export interface ReportJudgmentRecord {
  kind: "report";
  pair_id: string;
  reader_id: string;
  category: Category;
  report_index: 0 | 1;
  verdict: ReportVerdict;
}

export type JudgmentRecord = AttributeJudgmentRecord | ReportJudgmentRecord;

export interface SummaryCell {
  k: number;
  n: number;
  accuracy: number;
  ci_low: number;
  ci_high: number;
}

export interface SummaryPayload {
  cells: Record<string, Record<string, SummaryCell>>;
  all_attribute_pairs: SummaryCell;
  agreement_rate: number | null;
}

export const CATEGORY_FIELDS: ReadonlyArray<[Category, keyof ReportExtraction]> = [
  ["TL", "target_lesions"],
  ["NTL", "non_target_lesions"],
  ["NL", "new_lesions"],
];

export const ATTRIBUTES: readonly Attribute[] = ["label", "size", "se_ima"];
