/**
 * DOM layer. Every screen is rebuilt from session state on each change;
 * the only state that lives in the DOM between redraws is the focused
 * input's text, which the session tracks as a silent draft.
 *
 * renderTask accepts every payload kind the experiment produces, the two
 * sampling kinds plus the three Likert stages, so the same form code serves
 * the live chain flow and any rating deployment pointed at this bundle.
 */

import { LikertScale, OpenTrial } from "./api.js";
import { Session } from "./session.js";
import {
  MIN_SENTENCE_WORDS,
  sentenceProblem,
  toneProblem,
  wordCount,
} from "./validation.js";

export type TaskPayload =
  | OpenTrial
  | { kind: "rating"; tone: string; sentence: string }
  | { kind: "similarity"; tone_a: string; tone_b: string }
  | { kind: "feature"; tone: string; feature: string };

export interface TaskHandlers {
  onSubmitText?: (text: string) => void;
  onRate?: (value: number) => void;
  onRetry?: () => void;
  draft?: string;
  inlineError?: string | null;
  pending?: boolean;
  scale?: LikertScale;
}

const DEFAULT_SCALE: LikertScale = {
  min: 1,
  max: 5,
  min_label: "weakest",
  max_label: "strongest",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

// -- top-level dispatch ------------------------------------------------------

export function mountSession(root: HTMLElement, session: Session): void {
  session.onChange(() => renderApp(root, session));
  renderApp(root, session);
}

export function renderApp(root: HTMLElement, session: Session): void {
  const state = session.state;
  root.textContent = "";
  root.dataset.screen = state.screen;
  switch (state.screen) {
    case "loading":
      root.append(el("p", { class: "status" }, "Loading…"));
      break;
    case "instructions":
      root.append(renderInstructions(session));
      break;
    case "trial":
      root.append(renderLiveTrial(session));
      break;
    case "done":
      root.append(renderDone(session));
      break;
    case "failure":
      root.append(
        errorPanel(state.failure ?? "Something went wrong.", () =>
          void session.advance(),
        ),
      );
      break;
  }
}

// -- instructions with practice cards ----------------------------------------

function renderInstructions(session: Session): HTMLElement {
  const doc = session.state.doc;
  const page = el("div", { class: "instructions" });
  if (doc === null) return page;
  page.append(el("h1", {}, doc.title));
  page.append(el("p", { class: "definition" }, doc.definition));
  for (const section of doc.sections) {
    page.append(el("h2", {}, section.heading));
    page.append(el("p", {}, section.body));
  }
  if (doc.examples && doc.examples.length > 0) {
    page.append(el("h2", {}, "Try it"));
    page.append(
      el(
        "p",
        { class: "practice-note" },
        "These two practice prompts are not recorded and do not affect " +
          "your session; use them to get a feel for the tasks.",
      ),
    );
    for (const example of doc.examples) {
      page.append(practiceCard(example));
    }
  }
  const begin = el(
    "button",
    { class: "begin", type: "button", disabled: "" },
    "Begin",
  ) as HTMLButtonElement;
  const ack = el("input", {
    type: "checkbox",
    id: "ack",
    class: "ack",
  }) as HTMLInputElement;
  ack.addEventListener("change", () => {
    begin.disabled = !ack.checked;
  });
  begin.addEventListener("click", () => void session.acknowledge());
  page.append(
    el(
      "p",
      { class: "ack-row" },
      ack,
      el("label", { for: "ack" }, " I have read the instructions."),
    ),
    begin,
  );
  return page;
}

function practiceCard(example: {
  task: string;
  prompt: string;
  answer: string;
  why: string;
}): HTMLElement {
  const isSentenceTask = example.task.includes("sentence");
  const card = el("div", { class: "practice-card" });
  card.append(el("h3", {}, example.task));
  card.append(el("p", { class: "prompt" }, example.prompt));
  const input = el("input", {
    type: "text",
    class: "practice-input",
    placeholder: isSentenceTask ? "Write a sentence…" : "One adjective…",
  }) as HTMLInputElement;
  const verdict = el("p", { class: "practice-verdict" });
  const check = el(
    "button",
    { type: "button", class: "practice-check" },
    "Check",
  );
  check.addEventListener("click", () => {
    const problem = isSentenceTask
      ? sentenceProblem(input.value)
      : toneProblem(input.value);
    verdict.textContent =
      problem === null
        ? `Looks valid. One good answer: “${example.answer}” — ${example.why}`
        : problem.message;
  });
  card.append(input, check, verdict);
  return card;
}

// -- live trial screen --------------------------------------------------------

function renderLiveTrial(session: Session): HTMLElement {
  const state = session.state;
  const trial = state.trial;
  const wrap = el("div", { class: "trial" });
  if (trial === null) return wrap;
  if (state.banner !== null) {
    const retry = el(
      "button",
      { type: "button", class: "retry" },
      state.banner.action === "resubmit" ? "Try again" : "Refresh",
    );
    retry.addEventListener("click", () => void session.retry());
    wrap.append(
      el("div", { class: "banner", role: "alert" }, state.banner.message, retry),
    );
  }
  wrap.append(
    el(
      "p",
      { class: "progress" },
      `Trial ${trial.completed + 1} of up to ${trial.quota}`,
    ),
  );
  const form = renderTask(trial, {
    draft: state.draft,
    inlineError: state.inlineError,
    pending: state.pending,
    onSubmitText: (text) => {
      session.setDraft(text);
      void session.submit();
    },
  });
  wrap.append(form);
  return wrap;
}

function renderDone(session: Session): HTMLElement {
  const done = session.state.done;
  const wrap = el("div", { class: "done" });
  wrap.append(el("h1", {}, "All done, thank you!"));
  if (done !== null) {
    wrap.append(
      el(
        "p",
        { class: "summary" },
        `You completed ${done.completed} of up to ${done.quota} trials.`,
      ),
    );
    wrap.append(
      el(
        "p",
        { class: "reason" },
        done.reason === "quota-reached"
          ? "You reached the trial quota for this session."
          : "There are no further tasks available for you right now.",
      ),
    );
  }
  return wrap;
}

// -- task forms ----------------------------------------------------------------

export function renderTask(
  payload: TaskPayload,
  handlers: TaskHandlers = {},
): HTMLElement {
  switch (payload.kind) {
    case "S":
      return sentenceForm(payload, handlers);
    case "T":
      return toneForm(payload, handlers);
    case "rating":
      return likertForm(
        `How strongly does this sentence convey the tone “${payload.tone}”?`,
        el("blockquote", { class: "stimulus" }, payload.sentence),
        handlers,
      );
    case "similarity":
      return likertForm(
        "How similar are these two tones?",
        el(
          "p",
          { class: "stimulus pair" },
          el("strong", {}, payload.tone_a),
          " — ",
          el("strong", {}, payload.tone_b),
        ),
        handlers,
      );
    case "feature":
      return likertForm(
        `How strongly does the tone “${payload.tone}” express this?`,
        el("p", { class: "stimulus" }, payload.feature),
        handlers,
      );
    default:
      return errorPanel(
        `This trial has an unknown kind (${String((payload as { kind?: unknown }).kind)}). ` +
          "It cannot be displayed.",
        handlers.onRetry,
      );
  }
}

function sentenceForm(trial: OpenTrial, handlers: TaskHandlers): HTMLElement {
  const form = taskShell(trial, "Write one sentence with this tone:");
  form.append(
    el("p", { class: "prompt tone-prompt" }, trial.prompt.text),
  );
  const input = el("textarea", {
    class: "response",
    rows: "3",
    placeholder: `A new sentence of more than ${MIN_SENTENCE_WORDS} words…`,
  }) as HTMLTextAreaElement;
  input.value = handlers.draft ?? "";
  const counter = el(
    "span",
    { class: "word-count" },
    countLabel(input.value),
  );
  input.addEventListener("input", () => {
    counter.textContent = countLabel(input.value);
  });
  appendSubmitRow(form, input, counter, handlers);
  return form;
}

function toneForm(trial: OpenTrial, handlers: TaskHandlers): HTMLElement {
  const form = taskShell(
    trial,
    "Name the conversational tone of this sentence with one adjective:",
  );
  form.append(
    el("blockquote", { class: "prompt sentence-prompt" }, trial.prompt.text),
  );
  const input = el("input", {
    type: "text",
    class: "response",
    placeholder: "One adjective…",
  }) as HTMLInputElement;
  input.value = handlers.draft ?? "";
  appendSubmitRow(form, input, null, handlers);
  return form;
}

function taskShell(trial: OpenTrial, lead: string): HTMLElement {
  const form = el("div", { class: "task" });
  form.dataset.trialId = trial.trial_id;
  form.dataset.chainId = trial.chain_id;
  form.dataset.kind = trial.kind;
  form.append(el("p", { class: "lead" }, lead));
  return form;
}

function appendSubmitRow(
  form: HTMLElement,
  input: HTMLInputElement | HTMLTextAreaElement,
  counter: HTMLElement | null,
  handlers: TaskHandlers,
): void {
  const submit = el(
    "button",
    { type: "button", class: "submit" },
    "Submit",
  ) as HTMLButtonElement;
  if (handlers.pending) submit.disabled = true;
  submit.addEventListener("click", () => {
    handlers.onSubmitText?.(input.value);
  });
  const row = el("p", { class: "submit-row" }, submit);
  if (counter !== null) row.append(" ", counter);
  form.append(input, row);
  if (handlers.inlineError) {
    form.append(
      el("p", { class: "inline-error", role: "alert" }, handlers.inlineError),
    );
  }
}

function countLabel(text: string): string {
  const count = wordCount(text);
  return count === 1 ? "1 word" : `${count} words`;
}

// -- discrete Likert slider ------------------------------------------------------

/** Five discrete stops, none pre-selected; submit stays off until a pick. */
export function likertForm(
  question: string,
  stimulus: HTMLElement,
  handlers: TaskHandlers,
): HTMLElement {
  const scale = handlers.scale ?? DEFAULT_SCALE;
  const form = el("div", { class: "task likert" });
  form.append(el("p", { class: "lead" }, question), stimulus);
  let chosen: number | null = null;
  const submit = el(
    "button",
    { type: "button", class: "submit", disabled: "" },
    "Submit",
  ) as HTMLButtonElement;
  const track = el("div", {
    class: "likert-track",
    role: "radiogroup",
    "aria-label": question,
  });
  const stops: HTMLButtonElement[] = [];
  for (let value = scale.min; value <= scale.max; value++) {
    const stop = el(
      "button",
      {
        type: "button",
        class: "likert-stop",
        role: "radio",
        "aria-checked": "false",
        "data-value": String(value),
      },
      String(value),
    ) as HTMLButtonElement;
    stop.addEventListener("click", () => {
      chosen = value;
      for (const other of stops) {
        other.setAttribute("aria-checked", other === stop ? "true" : "false");
        other.classList.toggle("selected", other === stop);
      }
      submit.disabled = false;
    });
    stops.push(stop);
    track.append(stop);
  }
  submit.addEventListener("click", () => {
    if (chosen !== null) handlers.onRate?.(chosen);
  });
  form.append(
    el(
      "div",
      { class: "likert-row" },
      el("span", { class: "scale-label" }, scale.min_label),
      track,
      el("span", { class: "scale-label" }, scale.max_label),
    ),
    el("p", { class: "submit-row" }, submit),
  );
  if (handlers.inlineError) {
    form.append(
      el("p", { class: "inline-error", role: "alert" }, handlers.inlineError),
    );
  }
  return form;
}

export function errorPanel(
  message: string,
  onRetry?: () => void,
): HTMLElement {
  const panel = el("div", { class: "error-panel", role: "alert" });
  panel.append(el("h1", {}, "Sorry, something went wrong"));
  panel.append(el("p", {}, message));
  const retry = el("button", { type: "button", class: "retry" }, "Retry");
  retry.addEventListener("click", () => onRetry?.());
  panel.append(retry);
  return panel;
}
