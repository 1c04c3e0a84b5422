/** Typed client for the /v1/ HTTP+JSON API.
 *
 * Every call goes over plain fetch; the engine is reached only through
 * its public endpoints. `X-Actor` and `X-Role` headers carry the
 * operator identity picked in the console.
 */

import type {
  CaseView,
  EventEntry,
  GuidelineSummary,
  HealthInfo,
  LatencyMetrics,
  SceneView,
  ValidationReport,
  WorkItemView,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export interface Identity {
  actor?: string;
  role?: string;
}

export class ConsoleApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl =
      fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
  }

  // -- meta ----------------------------------------------------------------

  health(): Promise<HealthInfo> {
    return this.get("/v1/health");
  }

  advanceTime(by: string): Promise<{ now: string }> {
    return this.post("/v1/time/advance", { by });
  }

  // -- guidelines ------------------------------------------------------------

  listGuidelines(): Promise<GuidelineSummary[]> {
    return this.get("/v1/guidelines");
  }

  validateGuideline(documentText: string): Promise<ValidationReport> {
    return this.postRaw("/v1/guidelines/validate", documentText);
  }

  // -- cases -----------------------------------------------------------------

  listCases(status?: string): Promise<CaseView[]> {
    return this.get(this.withQuery("/v1/cases", { status }));
  }

  getCase(caseId: string): Promise<CaseView> {
    return this.get(`/v1/cases/${encodeURIComponent(caseId)}`);
  }

  startCase(
    guidelineId: string,
    patientRef: string,
    identity?: Identity,
  ): Promise<CaseView> {
    return this.post(
      "/v1/cases",
      { guideline_id: guidelineId, patient_ref: patientRef },
      identity,
    );
  }

  abortCase(
    caseId: string,
    reason: string,
    identity?: Identity,
  ): Promise<CaseView> {
    return this.post(
      `/v1/cases/${encodeURIComponent(caseId)}/abort`,
      { reason },
      identity,
    );
  }

  getSurvey(caseId: string): Promise<SceneView> {
    return this.get(`/v1/cases/${encodeURIComponent(caseId)}/survey`);
  }

  answer(
    caseId: string,
    questionId: string,
    option: string,
    identity?: Identity,
  ): Promise<SceneView> {
    return this.post(
      `/v1/cases/${encodeURIComponent(caseId)}/answers`,
      { question_id: questionId, option },
      identity,
    );
  }

  caseEvents(caseId: string, after = 0): Promise<EventEntry[]> {
    return this.get(
      this.withQuery(`/v1/cases/${encodeURIComponent(caseId)}/events`, {
        after: String(after),
      }),
    );
  }

  // -- work items --------------------------------------------------------------

  listWorkItems(filter?: {
    role?: string;
    caseId?: string;
    includeClosed?: boolean;
  }): Promise<WorkItemView[]> {
    return this.get(
      this.withQuery("/v1/work-items", {
        role: filter?.role,
        case_id: filter?.caseId,
        include_closed: filter?.includeClosed ? "true" : undefined,
      }),
    );
  }

  startWorkItem(itemId: string, identity?: Identity): Promise<WorkItemView> {
    return this.post(
      `/v1/work-items/${encodeURIComponent(itemId)}/start`,
      {},
      identity,
    );
  }

  completeWorkItem(
    itemId: string,
    outputs: Record<string, unknown>,
    identity?: Identity,
  ): Promise<CaseView> {
    return this.post(
      `/v1/work-items/${encodeURIComponent(itemId)}/complete`,
      { outputs },
      identity,
    );
  }

  // -- metrics -----------------------------------------------------------------

  sceneLatency(): Promise<LatencyMetrics> {
    return this.get("/v1/metrics/scene-latency");
  }

  // -- plumbing ----------------------------------------------------------------

  streamUrl(after: number, role?: string): string {
    return (
      this.baseUrl +
      this.withQuery("/v1/stream", {
        after: String(after),
        role,
      })
    );
  }

  private withQuery(
    path: string,
    params: Record<string, string | undefined>,
  ): string {
    const pairs = Object.entries(params).filter(
      (pair): pair is [string, string] => pair[1] !== undefined,
    );
    if (pairs.length === 0) return path;
    const qs = pairs
      .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(v)}`)
      .join("&");
    return `${path}?${qs}`;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    return this.decode(response);
  }

  private async post<T>(
    path: string,
    body: unknown,
    identity?: Identity,
  ): Promise<T> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    if (identity?.actor) headers["x-actor"] = identity.actor;
    if (identity?.role) headers["x-role"] = identity.role;
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers,
      body: JSON.stringify(body),
    });
    return this.decode(response);
  }

  private async postRaw<T>(path: string, body: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body,
    });
    return this.decode(response);
  }

  private async decode<T>(response: Response): Promise<T> {
    if (response.ok) {
      return (await response.json()) as T;
    }
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
}
