import { describe, expect, it } from "vitest";

import { ApiError, ReviewApi } from "../src/api";
import type { JudgmentRecord } from "../src/types";

interface Call {
  url: string;
  init?: RequestInit;
}

function fakeFetch(responder: (url: string, init?: RequestInit) => Response) {
  const calls: Call[] = [];
  const fn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    return responder(url, init);
  }) as typeof fetch;
  return { fn, calls };
}

const ok = (body: unknown) =>
  new Response(JSON.stringify(body), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });

describe("ReviewApi", () => {
  it("hits the documented endpoint paths", async () => {
    const { fn, calls } = fakeFetch(() => ok({ pairs: [] }));
    const api = new ReviewApi("http://host", "run1", fn);
    await api.listPairs();
    expect(calls[0]!.url).toBe("http://host/runs/run1/pairs");
  });

  it("passes the reader for isolation", async () => {
    const { fn, calls } = fakeFetch(() => ok({ pair_id: "p", judgments: [] }));
    const api = new ReviewApi("", "run1", fn);
    await api.getPair("P0001/a/b", "reader2");
    expect(calls[0]!.url).toBe("/runs/run1/pairs/P0001/a/b?reader=reader2");
  });

  it("posts one judgment per call with a JSON body", async () => {
    const { fn, calls } = fakeFetch(() => ok({ status: "recorded" }));
    const api = new ReviewApi("", "run1", fn);
    const judgment: JudgmentRecord = {
      kind: "attribute", pair_id: "p", reader_id: "a", lesion_label: "TL_1_x",
      category: "TL", report_index: 0, attribute: "size", verdict: "correct",
    };
    await api.postJudgment(judgment);
    expect(calls[0]!.url).toBe("/runs/run1/judgments");
    expect(calls[0]!.init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual(judgment);
  });

  it("surfaces service error codes", async () => {
    const { fn } = fakeFetch(() =>
      new Response(JSON.stringify({ error: "unknown_lesion", detail: "nope" }),
        { status: 422 }));
    const api = new ReviewApi("", "run1", fn);
    await expect(api.postJudgment({} as JudgmentRecord)).rejects.toThrowError(ApiError);
    try {
      await api.postJudgment({} as JudgmentRecord);
    } catch (error) {
      expect((error as ApiError).code).toBe("unknown_lesion");
      expect((error as ApiError).status).toBe(422);
    }
  });

  it("requests summaries for pooled readers", async () => {
    const { fn, calls } = fakeFetch(() =>
      ok({ cells: {}, all_attribute_pairs: { k: 0, n: 1 }, agreement_rate: null }));
    const api = new ReviewApi("", "run1", fn);
    await api.summary(["a", "b"]);
    expect(calls[0]!.url).toBe("/runs/run1/summary?readers=a%2Cb");
  });
});
