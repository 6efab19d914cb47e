// Fetch/submit flow for one browser session: one in-flight survey at a
// time, optimistic fetch-after-submit, and an idle countdown when the
// queue is drained. All rendering happens through the hooks so the flow
// is testable without a DOM.

import { ApiError, QueueClient } from "./api";
import { SurveyForm } from "./survey";

export interface SessionHooks {
  showSurvey(form: SurveyForm): void;
  /** Called once per second while idle, with the seconds remaining. */
  showCountdown(secondsLeft: number): void;
  /** Service rejections (400/403/409) and payload errors, user-readable. */
  showError(message: string): void;
}

export type Sleeper = (ms: number) => Promise<void>;

const defaultSleep: Sleeper = (ms) => new Promise((r) => setTimeout(r, ms));

const RETRY_BASE_MS = 1000;
const RETRY_MAX_MS = 30000;

export class Session {
  current: SurveyForm | null = null;

  constructor(
    private client: QueueClient,
    private annotator: string,
    private hooks: SessionHooks,
    private sleep: Sleeper = defaultSleep,
  ) {}

  /**
   * Polls until a survey arrives, counting down the Retry-After hint
   * between attempts. Network failures back off exponentially.
   */
  async fetchNext(): Promise<SurveyForm> {
    let backoff = RETRY_BASE_MS;
    for (;;) {
      let result;
      try {
        result = await this.client.nextSurvey(this.annotator);
      } catch (err) {
        if (err instanceof ApiError) {
          this.hooks.showError(err.detail);
          throw err;
        }
        await this.sleep(backoff);
        backoff = Math.min(backoff * 2, RETRY_MAX_MS);
        continue;
      }
      backoff = RETRY_BASE_MS;
      if (result.kind === "survey") {
        this.current = new SurveyForm(result.survey);
        this.hooks.showSurvey(this.current);
        return this.current;
      }
      for (let left = result.retryAfterSeconds; left > 0; left--) {
        this.hooks.showCountdown(left);
        await this.sleep(1000);
      }
    }
  }

  /**
   * Submits the completed form, then fetches the next survey. Service
   * rejections are surfaced and the answers stay in place; network
   * failures retry with backoff so nothing is lost offline.
   */
  async submitCurrent(): Promise<SurveyForm> {
    const form = this.current;
    if (form === null) throw new Error("no survey in flight");
    const answers = form.submission();
    let backoff = RETRY_BASE_MS;
    for (;;) {
      try {
        await this.client.submit(form.payload.survey_id, this.annotator, answers);
        break;
      } catch (err) {
        if (err instanceof ApiError) {
          // Duplicate (409) and validation (400) rejections are final;
          // the form keeps its answers for the annotator to see.
          this.hooks.showError(err.detail);
          throw err;
        }
        await this.sleep(backoff);
        backoff = Math.min(backoff * 2, RETRY_MAX_MS);
      }
    }
    this.current = null;
    return this.fetchNext();
  }
}
