// Client-side survey form state. The wire payload is validated up front so
// a malformed survey never produces a partially rendered form, and submit
// stays disabled until every question has an answer from its closed set.

import type { SurveyPayload } from "./api";

export const MAX_ATTEMPTS = 3;

export class MalformedPayloadError extends Error {
  constructor(reason: string) {
    super(`malformed survey payload: ${reason}`);
    this.name = "MalformedPayloadError";
  }
}

function isNonEmptyString(v: unknown): v is string {
  return typeof v === "string" && v.length > 0;
}

/** Validates the raw wire object and returns it typed, or throws. */
export function parseSurveyPayload(raw: unknown): SurveyPayload {
  if (typeof raw !== "object" || raw === null) {
    throw new MalformedPayloadError("not an object");
  }
  const p = raw as Record<string, unknown>;
  if (!isNonEmptyString(p.survey_id)) throw new MalformedPayloadError("missing survey_id");
  if (!isNonEmptyString(p.category)) throw new MalformedPayloadError("missing category");

  const seg = p.segment as Record<string, unknown> | undefined;
  if (!seg || !isNonEmptyString(seg.id) || !isNonEmptyString(seg.text)) {
    throw new MalformedPayloadError("missing segment id or text");
  }

  const attempt = p.attempt;
  if (typeof attempt !== "number" || !Number.isInteger(attempt) || attempt < 1 || attempt > MAX_ATTEMPTS) {
    throw new MalformedPayloadError(`attempt must be 1..${MAX_ATTEMPTS}`);
  }

  const questions = p.questions;
  if (!Array.isArray(questions) || questions.length === 0) {
    throw new MalformedPayloadError("missing questions");
  }
  const seen = new Set<string>();
  for (const q of questions) {
    if (!q || !isNonEmptyString(q.id)) throw new MalformedPayloadError("question without id");
    if (seen.has(q.id)) throw new MalformedPayloadError(`duplicate question ${q.id}`);
    seen.add(q.id);
    if (!Array.isArray(q.options) || q.options.length < 2 || !q.options.every(isNonEmptyString)) {
      throw new MalformedPayloadError(`question ${q.id} needs at least two options`);
    }
  }
  return raw as SurveyPayload;
}

export function attemptBadge(attempt: number): string {
  return `attempt ${attempt} of ${MAX_ATTEMPTS}`;
}

/**
 * Answer state for one survey. Mutations go through answer(); the survey
 * payload itself (segment text included) is never modified.
 */
export class SurveyForm {
  readonly payload: SurveyPayload;
  private answers = new Map<string, string>();

  constructor(raw: unknown) {
    this.payload = parseSurveyPayload(raw);
  }

  get badge(): string {
    return attemptBadge(this.payload.attempt);
  }

  /** Records one answer; rejects unknown questions and off-menu options. */
  answer(questionId: string, option: string): void {
    const q = this.payload.questions.find((x) => x.id === questionId);
    if (!q) throw new Error(`unknown question ${questionId}`);
    if (!q.options.includes(option)) {
      throw new Error(`option ${option} not offered for ${questionId}`);
    }
    this.answers.set(questionId, option);
  }

  answered(questionId: string): string | undefined {
    return this.answers.get(questionId);
  }

  /** True once every question has an answer; gates the submit button. */
  isComplete(): boolean {
    return this.payload.questions.every((q) => this.answers.has(q.id));
  }

  /** The exact answers object the service expects. */
  submission(): Record<string, string> {
    if (!this.isComplete()) throw new Error("survey incomplete");
    return Object.fromEntries(this.answers);
  }
}
