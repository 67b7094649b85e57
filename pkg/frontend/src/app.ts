/**
 * Bootstrap: wire an Api + Session to a root element. The participant id
 * comes from the ?participant= query parameter when the experimenter hands
 * out personalized links, otherwise from localStorage so a reload lands the
 * same person back on their open trial.
 */

import { Api } from "./api.js";
import { TaskPayload } from "./render.js";
import { mountSession } from "./render.js";
import { Session } from "./session.js";

const STORAGE_KEY = "tonelab-participant";

export interface MountOptions {
  participantId?: string;
  base?: string;
  fetchFn?: typeof fetch;
}

export function resolveParticipantId(
  search: string,
  storage: Pick<Storage, "getItem" | "setItem">,
): string {
  const fromQuery = new URLSearchParams(search).get("participant");
  if (fromQuery) {
    storage.setItem(STORAGE_KEY, fromQuery);
    return fromQuery;
  }
  const stored = storage.getItem(STORAGE_KEY);
  if (stored) return stored;
  const minted = `p-${Math.random().toString(36).slice(2, 10)}`;
  storage.setItem(STORAGE_KEY, minted);
  return minted;
}

export function mount(root: HTMLElement, options: MountOptions = {}): Session {
  const participantId =
    options.participantId ??
    resolveParticipantId(window.location.search, window.localStorage);
  const api = new Api(options.base ?? "", options.fetchFn);
  const session = new Session(api, participantId);
  mountSession(root, session);
  void session.start();
  return session;
}

/** POST a Likert judgment to the endpoint matching the task kind. */
export async function recordJudgment(
  api: Api,
  raterId: string,
  payload: TaskPayload,
  value: number,
): Promise<void> {
  switch (payload.kind) {
    case "rating":
      await api.postRating({
        tone: payload.tone,
        sentence: payload.sentence,
        rater_id: raterId,
        value,
      });
      return;
    case "similarity":
      await api.postSimilarity({
        tone_a: payload.tone_a,
        tone_b: payload.tone_b,
        rater_id: raterId,
        value,
      });
      return;
    case "feature":
      await api.postFeatureRating({
        tone: payload.tone,
        feature: payload.feature,
        rater_id: raterId,
        value,
      });
      return;
    default:
      throw new Error(`no judgment endpoint for kind ${payload.kind}`);
  }
}

// auto-mount in the browser; tests import mount() and pass their own root
const autoRoot =
  typeof document !== "undefined" ? document.getElementById("app") : null;
if (autoRoot !== null) {
  mount(autoRoot);
}
