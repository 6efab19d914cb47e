import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";

import {
  MalformedPayloadError,
  SurveyForm,
  attemptBadge,
  parseSurveyPayload,
} from "../src/survey";

const recorded = JSON.parse(
  readFileSync(new URL("./fixtures/recorded.json", import.meta.url), "utf8"),
);
const PAYLOAD = recorded.next_ok.body;

const FULL_ANSWERS: Record<string, string> = {
  relevance: "yes",
  "mode:collect_use": "assert",
  "mode:share": "choice",
  "mode:store": "not_mentioned",
  honesty: "yes",
};

function completedForm(): SurveyForm {
  const form = new SurveyForm(PAYLOAD);
  for (const [q, a] of Object.entries(FULL_ANSWERS)) form.answer(q, a);
  return form;
}

describe("parseSurveyPayload", () => {
  it("accepts the recorded wire payload unchanged", () => {
    const parsed = parseSurveyPayload(PAYLOAD);
    expect(parsed.survey_id).toBe("live-0");
    expect(parsed.questions).toHaveLength(5);
  });

  it.each([
    ["null", null],
    ["missing survey_id", { ...PAYLOAD, survey_id: "" }],
    ["missing segment text", { ...PAYLOAD, segment: { id: "x", doc_id: "d", text: "" } }],
    ["no questions", { ...PAYLOAD, questions: [] }],
    ["one-option question", { ...PAYLOAD, questions: [{ id: "relevance", options: ["yes"] }] }],
    ["attempt zero", { ...PAYLOAD, attempt: 0 }],
    ["attempt past cap", { ...PAYLOAD, attempt: 4 }],
  ])("rejects %s", (_name, raw) => {
    expect(() => parseSurveyPayload(raw)).toThrow(MalformedPayloadError);
  });

  it("rejects duplicate question ids", () => {
    const q = PAYLOAD.questions[0];
    expect(() => parseSurveyPayload({ ...PAYLOAD, questions: [q, q] })).toThrow(
      MalformedPayloadError,
    );
  });
});

describe("attempt badge", () => {
  it("shows the attempt number against the cap of 3", () => {
    expect(attemptBadge(2)).toBe("attempt 2 of 3");
    expect(new SurveyForm(PAYLOAD).badge).toBe("attempt 2 of 3");
  });
});

describe("SurveyForm", () => {
  it("is incomplete until all five questions are answered", () => {
    const form = new SurveyForm(PAYLOAD);
    expect(form.isComplete()).toBe(false);
    form.answer("relevance", "yes");
    form.answer("mode:collect_use", "assert");
    form.answer("mode:share", "choice");
    form.answer("mode:store", "not_mentioned");
    expect(form.isComplete()).toBe(false);
    form.answer("honesty", "yes");
    expect(form.isComplete()).toBe(true);
  });

  it("refuses to build a submission while incomplete", () => {
    const form = new SurveyForm(PAYLOAD);
    form.answer("relevance", "no");
    expect(() => form.submission()).toThrow(/incomplete/);
  });

  it("rejects answers outside the offered option set", () => {
    const form = new SurveyForm(PAYLOAD);
    expect(() => form.answer("mode:share", "sometimes")).toThrow(/not offered/);
    expect(() => form.answer("mode:color", "assert")).toThrow(/unknown question/);
  });

  it("lets an answer be revised before submit", () => {
    const form = completedForm();
    form.answer("mode:share", "denial");
    expect(form.submission()["mode:share"]).toBe("denial");
  });

  it("produces exactly the answers object the service expects", () => {
    expect(completedForm().submission()).toEqual(FULL_ANSWERS);
  });

  it("never mutates the segment text", () => {
    const form = completedForm();
    expect(form.payload.segment.text).toBe(PAYLOAD.segment.text);
  });
});
