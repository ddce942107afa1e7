/** Thin typed client for the experiment service. All numbers displayed in the
 * UI originate from these responses; the client never computes payoffs. */

import type {
  ChoiceOutcome,
  FinalizeResponse,
  NextResponse,
  SessionCreated,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const body = await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, body?.detail ?? res.statusText);
    }
    return body as T;
  }

  createSession(participantId: string): Promise<SessionCreated> {
    return this.request<SessionCreated>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ participant_id: participantId }),
    });
  }

  nextTrial(sessionId: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/sessions/${sessionId}/next`);
  }

  submitChoice(sessionId: string, problemId: string, choice: "A" | "B"): Promise<ChoiceOutcome> {
    return this.request<ChoiceOutcome>(`/sessions/${sessionId}/choices`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ problem_id: problemId, choice }),
    });
  }

  finalize(sessionId: string): Promise<FinalizeResponse> {
    return this.request<FinalizeResponse>(`/sessions/${sessionId}/finalize`, {
      method: "POST",
    });
  }
}
