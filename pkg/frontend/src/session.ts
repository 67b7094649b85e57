/**
 * One participant's pass through the experiment: instructions, then trials
 * handed out by the server until it reports the session done.
 *
 * The session is a small state machine with no DOM knowledge; the renderer
 * subscribes and redraws on every notify. Two invariants are enforced here
 * rather than in the markup: nothing is submittable before the instructions
 * are acknowledged, and the server's completed count can never exceed the
 * quota it advertises.
 */

import {
  Api,
  ApiError,
  Instructions,
  NetworkError,
  NextTrial,
  OpenTrial,
  RejectedError,
  isDone,
} from "./api.js";
import { sentenceProblem, toneProblem } from "./validation.js";

export type ScreenName =
  | "loading"
  | "instructions"
  | "trial"
  | "done"
  | "failure";

export interface Banner {
  message: string;
  // resubmit retries the failed POST with the preserved draft;
  // resync abandons the stale trial and asks the server what is next
  action: "resubmit" | "resync";
}

export interface DoneInfo {
  reason: string;
  completed: number;
  quota: number;
}

export interface SessionState {
  screen: ScreenName;
  participantId: string;
  doc: Instructions | null;
  acknowledged: boolean;
  trial: OpenTrial | null;
  draft: string;
  inlineError: string | null;
  banner: Banner | null;
  pending: boolean;
  done: DoneInfo | null;
  failure: string | null;
}

type Listener = (state: SessionState) => void;

const REJECTION_TEXT: Record<string, string> = {
  "too-short": "The sentence is too short",
  "not-grammatical": "That does not read as a grammatical sentence",
  "bad-charset": "Tones are a single word, letters and hyphens only",
  misspelled: "That word is not in the dictionary, check the spelling",
  "not-adjective": "Tone words must be adjectives",
  "stem-overlap": "The answer reuses a word from the prompt",
  profanity: "That word is not allowed here",
  "bad-request": "The server could not read the submission",
};

export function rejectionMessage(kind: string, detail: string): string {
  const text = REJECTION_TEXT[kind] ?? `Rejected (${kind})`;
  return detail ? `${text} (${detail}).` : `${text}.`;
}

export class Session {
  readonly state: SessionState;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: Api,
    participantId: string,
  ) {
    this.state = {
      screen: "loading",
      participantId,
      doc: null,
      acknowledged: false,
      trial: null,
      draft: "",
      inlineError: null,
      banner: null,
      pending: false,
      done: null,
      failure: null,
    };
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  async start(): Promise<void> {
    try {
      this.state.doc = await this.api.instructions("sampling");
      this.state.screen = "instructions";
    } catch (err) {
      this.fail(`Could not load the instructions: ${describe(err)}`);
    }
    this.notify();
  }

  /** Mark the instructions as read and fetch the first trial. */
  async acknowledge(): Promise<void> {
    if (this.state.acknowledged) return;
    this.state.acknowledged = true;
    await this.advance();
  }

  /** Ask the server for the participant's next (or still-open) trial. */
  async advance(): Promise<void> {
    this.state.pending = true;
    this.state.banner = null;
    this.notify();
    let payload: NextTrial;
    try {
      payload = await this.api.nextTrial(this.state.participantId);
    } catch (err) {
      this.state.pending = false;
      this.fail(`Could not fetch the next trial: ${describe(err)}`);
      this.notify();
      return;
    }
    this.state.pending = false;
    if (isDone(payload)) {
      this.state.trial = null;
      this.state.done = {
        reason: payload.reason,
        completed: payload.completed,
        quota: payload.quota,
      };
      this.state.screen = "done";
    } else if (payload.completed > payload.quota) {
      this.fail(
        `The server reported ${payload.completed} completed trials against ` +
          `a quota of ${payload.quota}.`,
      );
    } else {
      this.state.trial = payload;
      this.state.draft = "";
      this.state.inlineError = null;
      this.state.screen = "trial";
    }
    this.notify();
  }

  /** Kept silent on purpose: redrawing on every keystroke would fight the
   *  input element for focus. The draft is read back at submit time. */
  setDraft(text: string): void {
    this.state.draft = text;
  }

  async submit(): Promise<void> {
    const trial = this.state.trial;
    if (trial === null || this.state.pending || !this.state.acknowledged) {
      return;
    }
    const text = this.state.draft;
    const problem =
      trial.kind === "S" ? sentenceProblem(text) : toneProblem(text);
    if (problem !== null) {
      // rejected locally; the server never sees this submission
      this.state.inlineError = problem.message;
      this.notify();
      return;
    }
    this.state.pending = true;
    this.state.inlineError = null;
    this.state.banner = null;
    this.notify();
    try {
      await this.api.submitResponse(trial.trial_id, text);
    } catch (err) {
      this.state.pending = false;
      if (err instanceof RejectedError) {
        this.state.inlineError = rejectionMessage(err.kind, err.detail);
      } else if (err instanceof NetworkError) {
        this.state.banner = {
          message: "The submission did not go through. Your answer is kept.",
          action: "resubmit",
        };
      } else if (err instanceof ApiError) {
        this.state.banner = {
          message: `This trial is no longer open (${err.detail}).`,
          action: "resync",
        };
      } else {
        throw err;
      }
      this.notify();
      return;
    }
    this.state.pending = false;
    await this.advance();
  }

  async retry(): Promise<void> {
    const banner = this.state.banner;
    if (banner === null) return;
    if (banner.action === "resubmit") {
      this.state.banner = null;
      await this.submit();
    } else {
      await this.advance();
    }
  }

  private fail(message: string): void {
    this.state.failure = message;
    this.state.screen = "failure";
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
