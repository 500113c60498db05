import type {
  JudgmentRecord,
  PairListItem,
  PairPayload,
  SummaryPayload,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(`${code}: ${detail}`);
  }
}

async function jsonOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "http_error";
    let detail = response.statusText;
    try {
      const body = await response.json();
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, code, detail);
  }
  return response.json() as Promise<T>;
}

/** Typed client for the review service HTTP API. */
export class ReviewApi {
  constructor(
    private readonly base: string,
    public readonly runId: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string, params?: Record<string, string>): string {
    const query = params ? "?" + new URLSearchParams(params).toString() : "";
    return `${this.base}${path}${query}`;
  }

  async health(): Promise<{ status: string; run_id: string }> {
    return jsonOrThrow(await this.fetchFn(this.url("/health")));
  }

  async listPairs(): Promise<PairListItem[]> {
    const body = await jsonOrThrow<{ pairs: PairListItem[] }>(
      await this.fetchFn(this.url(`/runs/${this.runId}/pairs`)),
    );
    return body.pairs;
  }

  async getPair(pairId: string, reader: string): Promise<PairPayload> {
    return jsonOrThrow(
      await this.fetchFn(
        this.url(`/runs/${this.runId}/pairs/${pairId}`, { reader }),
      ),
    );
  }

  async postJudgment(judgment: JudgmentRecord): Promise<void> {
    await jsonOrThrow(
      await this.fetchFn(this.url(`/runs/${this.runId}/judgments`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(judgment),
      }),
    );
  }

  async summary(readers: string[]): Promise<SummaryPayload> {
    return jsonOrThrow(
      await this.fetchFn(
        this.url(`/runs/${this.runId}/summary`, { readers: readers.join(",") }),
      ),
    );
  }

  async summaryBytes(readers: string[]): Promise<string> {
    const response = await this.fetchFn(
      this.url(`/runs/${this.runId}/summary`, { readers: readers.join(",") }),
    );
    if (!response.ok) {
      throw new ApiError(response.status, "http_error", response.statusText);
    }
    return response.text();
  }

  async exportJudgments(readers: string[]): Promise<string> {
    const response = await this.fetchFn(
      this.url(`/runs/${this.runId}/export`, { readers: readers.join(",") }),
    );
    if (!response.ok) {
      throw new ApiError(response.status, "http_error", response.statusText);
    }
    return response.text();
  }
}
