import type { ReviewApi } from "./api";
import { PairReviewState, SubmissionQueue } from "./state";

export interface ScriptedSessionOptions {
  /**
   * Ordinal (0-based, in stable row order across the whole run) of one
   * lesion to mark incorrect on its first attribute; everything else is
   * judged correct. Omit for an all-correct session.
   */
  flipLesionOrdinal?: number;
}

/**
 * Headless driver of a full review session: walks every pair in run
 * order, fills the attribute grid and submits through the ordered
 * queue. The end-to-end round-trip test uses it as "the UI without the
 * pixels"; it exercises exactly the state machinery the browser uses.
 */
export async function runScriptedSession(
  api: ReviewApi,
  readerId: string,
  options: ScriptedSessionOptions = {},
): Promise<{ pairs: number; lesions: number; judgments: number }> {
  const pairs = await api.listPairs();
  const queue = new SubmissionQueue();
  let lesionOrdinal = 0;
  let judgments = 0;
  for (const item of pairs) {
    const payload = await api.getPair(item.pair_id, readerId);
    if (!payload.extraction) continue;
    const state = new PairReviewState(payload.pair_id, payload.extraction);
    for (const row of state.rows) {
      const flip = lesionOrdinal === options.flipLesionOrdinal;
      row.sides.forEach((side, reportIndex) => {
        if (side === null) return;
        for (const attribute of ["label", "size", "se_ima"] as const) {
          const wrong = flip && reportIndex === 0 && attribute === "size";
          state.setToggle(row.label, reportIndex, attribute,
            wrong ? "incorrect" : "correct");
        }
      });
      lesionOrdinal += 1;
    }
    const batch = state.toJudgments(readerId);
    queue.enqueue(batch);
    const sent = await queue.flush((judgment) => api.postJudgment(judgment));
    if (queue.pending > 0) {
      throw new Error(`submission stalled: ${queue.lastError ?? "unknown"}`);
    }
    judgments += sent;
  }
  return { pairs: pairs.length, lesions: lesionOrdinal, judgments };
}
