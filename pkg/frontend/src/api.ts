// Typed client for the annotation queue HTTP API. The service owns all
// state; this module only shuttles JSON and maps status codes to errors.

export interface QuestionSpec {
  id: string;
  options: string[];
}

export interface SegmentView {
  id: string;
  doc_id: string;
  text: string;
}

export interface SurveyPayload {
  survey_id: string;
  segment: SegmentView;
  category: string;
  attempt: number;
  unit_cost: number;
  questions: QuestionSpec[];
  answered: number;
  needed: number;
}

export interface SubmitResult {
  status: string;
  completed: boolean;
}

export interface LedgerView {
  total_spend: number;
  surveys_issued: number;
  accepted_labels: number;
  wasted_requests: number;
  ambiguous: number;
  voided: number;
  cost_per_accepted: number | null;
}

export interface MetricsView {
  pending: number;
  in_flight: number;
  completed: number;
  ledger: LedgerView;
}

export type NextResult =
  | { kind: "survey"; survey: SurveyPayload }
  | { kind: "empty"; retryAfterSeconds: number };

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

const DEFAULT_RETRY_AFTER = 5;

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body, fall through
  }
  return resp.statusText || "request failed";
}

export class QueueClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  /** Next unanswered survey, or an empty marker with the poll hint. */
  async nextSurvey(annotator: string): Promise<NextResult> {
    const url = `${this.baseUrl}/api/surveys/next?annotator=${encodeURIComponent(annotator)}`;
    const resp = await this.fetchImpl(url);
    if (resp.status === 204) {
      const hint = parseInt(resp.headers.get("Retry-After") ?? "", 10);
      return {
        kind: "empty",
        retryAfterSeconds: Number.isFinite(hint) && hint > 0 ? hint : DEFAULT_RETRY_AFTER,
      };
    }
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return { kind: "survey", survey: (await resp.json()) as SurveyPayload };
  }

  async submit(
    surveyId: string,
    annotator: string,
    answers: Record<string, string>,
  ): Promise<SubmitResult> {
    const url = `${this.baseUrl}/api/surveys/${encodeURIComponent(surveyId)}/annotations`;
    const resp = await this.fetchImpl(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator, answers }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return (await resp.json()) as SubmitResult;
  }

  async metrics(): Promise<MetricsView> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/metrics`);
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return (await resp.json()) as MetricsView;
  }

  async segment(segmentId: string): Promise<SegmentView> {
    const url = `${this.baseUrl}/api/segments/${encodeURIComponent(segmentId)}`;
    const resp = await this.fetchImpl(url);
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return (await resp.json()) as SegmentView;
  }
}
