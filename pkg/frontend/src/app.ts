// DOM wiring for the survey page. All queue state lives on the service;
// this file just renders the current SurveyForm and forwards clicks.

import { QueueClient } from "./api";
import { Session } from "./session";
import { SurveyForm } from "./survey";

const QUESTION_TITLES: Record<string, string> = {
  relevance: "Does this text discuss the data category shown above?",
  "mode:collect_use": "Collection / use of this data",
  "mode:share": "Sharing of this data with third parties",
  "mode:store": "Storage / retention of this data",
  honesty: "Did you read the text carefully and answer honestly?",
};

const GUIDANCE =
  "Read the highlighted policy text, then answer every question. " +
  "Pick 'assert' when the policy states the practice happens, 'denial' when " +
  "it states the practice does not happen, 'choice' when the user can opt in " +
  "or out, 'not_mentioned' when the text is silent, and 'ambiguous' when you " +
  "cannot tell.";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function show(id: string, visible: boolean): void {
  el(id).style.display = visible ? "" : "none";
}

function renderSurvey(form: SurveyForm, onChange: () => void): void {
  el("category").textContent = form.payload.category;
  el("segment-text").textContent = form.payload.segment.text;
  el("attempt-badge").textContent = form.badge;
  el("guidance").textContent = GUIDANCE;

  const box = el("questions");
  box.textContent = "";
  for (const q of form.payload.questions) {
    const fieldset = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = QUESTION_TITLES[q.id] ?? q.id;
    fieldset.appendChild(legend);
    for (const option of q.options) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = q.id;
      radio.value = option;
      radio.checked = form.answered(q.id) === option;
      radio.addEventListener("change", () => {
        form.answer(q.id, option);
        onChange();
      });
      label.appendChild(radio);
      label.appendChild(document.createTextNode(` ${option.replace("_", " ")}`));
      fieldset.appendChild(label);
    }
    box.appendChild(fieldset);
  }
}

export function main(): void {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("service") ?? "";
  const annotator = params.get("annotator") ?? "";
  if (!annotator) {
    el("error").textContent = "add ?annotator=YOUR_ID to the page URL";
    return;
  }

  const client = new QueueClient(baseUrl);
  const submitButton = el("submit") as HTMLButtonElement;

  const session = new Session(client, annotator, {
    showSurvey(form) {
      show("idle", false);
      show("survey", true);
      el("error").textContent = "";
      renderSurvey(form, () => {
        submitButton.disabled = !form.isComplete();
      });
      submitButton.disabled = !form.isComplete();
    },
    showCountdown(secondsLeft) {
      show("survey", false);
      show("idle", true);
      el("countdown").textContent = `queue empty, polling again in ${secondsLeft}s`;
    },
    showError(message) {
      el("error").textContent = message;
    },
  });

  submitButton.addEventListener("click", () => {
    submitButton.disabled = true;
    session.submitCurrent().catch(() => {
      // rejection already surfaced; re-enable so the annotator can react
      submitButton.disabled = false;
    });
  });

  void session.fetchNext();
}

if (typeof document !== "undefined" && document.getElementById("survey")) {
  main();
}
