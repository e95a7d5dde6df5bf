/** Typed client for the engine's console API. Every mutation goes through
 * here; errors are surfaced as ApiError, never swallowed. */

import type {
  Annotation,
  FailureType,
  LedgerStats,
  PromptVersion,
  Proposal,
  ReviewItem,
  RoundManifest,
  Scoreboard,
  Session,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
    public readonly path: string,
  ) {
    super(`${status} on ${path}: ${detail}`);
    this.name = "ApiError";
  }

  /** Server-side state conflicts (stale console state) — refetch and retry. */
  get isStale(): boolean {
    return this.status === 409;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "content-type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail, path);
    }
    return (await response.json()) as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>("POST", path, body);
  }

  // -- rounds ----------------------------------------------------------------

  rounds(): Promise<number[]> {
    return this.get("/api/rounds");
  }

  manifest(round: number): Promise<RoundManifest> {
    return this.get(`/api/rounds/${round}/manifest`);
  }

  scoreboard(round: number): Promise<Scoreboard> {
    return this.get(`/api/scoreboard/${round}`);
  }

  // -- prompts ---------------------------------------------------------------

  templates(): Promise<string[]> {
    return this.get("/api/prompts");
  }

  versions(templateId: string): Promise<PromptVersion[]> {
    return this.get(`/api/prompts/${templateId}/versions`);
  }

  async diff(templateId: string, from: number, to: number): Promise<string[]> {
    const body = await this.get<{ diff: string[] }>(
      `/api/prompts/${templateId}/diff?from=${from}&to=${to}`,
    );
    return body.diff;
  }

  // -- IPO sessions ----------------------------------------------------------

  sessions(): Promise<Session[]> {
    return this.get("/api/ipo/sessions");
  }

  createSession(options: {
    session_id?: string;
    template_id?: string;
    version?: number;
    batch_size?: number;
    threshold?: number;
  }): Promise<{ session: Session; proposal: Proposal | null }> {
    return this.post("/api/ipo/sessions", options);
  }

  batch(sessionId: string): Promise<ReviewItem[]> {
    return this.get(`/api/ipo/sessions/${sessionId}/batch`);
  }

  tagFailure(
    sessionId: string,
    qaRef: string,
    failureType: FailureType,
    explanation: string,
    tagger: string,
  ): Promise<{ qa_ref: string; failure_type: string }> {
    return this.post(`/api/ipo/sessions/${sessionId}/failures`, {
      qa_ref: qaRef,
      failure_type: failureType,
      explanation,
      tagger,
    });
  }

  clearItem(sessionId: string, qaRef: string, tagger: string): Promise<{ ok: boolean }> {
    return this.post(`/api/ipo/sessions/${sessionId}/clear`, {
      qa_ref: qaRef,
      tagger,
    });
  }

  step(sessionId: string): Promise<{
    state: Session["state"];
    failure_rate: number;
    proposal: Proposal | null;
  }> {
    return this.post(`/api/ipo/sessions/${sessionId}/step`, {});
  }

  // -- proposals -------------------------------------------------------------

  proposals(): Promise<Proposal[]> {
    return this.get("/api/proposals");
  }

  decide(proposalId: string, approve: boolean, decider: string): Promise<Proposal> {
    return this.post(`/api/proposals/${proposalId}/decision`, { approve, decider });
  }

  // -- images and ledger -----------------------------------------------------

  annotation(imageId: string): Promise<Annotation> {
    return this.get(`/api/images/${imageId}/annotation`);
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${imageId}`;
  }

  ledgerStats(): Promise<LedgerStats> {
    return this.get("/api/ledger/stats");
  }
}
