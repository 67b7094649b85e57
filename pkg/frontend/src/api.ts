/**
 * Thin typed client over the trial service's HTTP API. Every method maps to
 * one endpoint; no state is kept here. Failures are split into three kinds
 * the UI treats differently: a 422 with a filter verdict (show inline, keep
 * the trial open), any other HTTP error (surface status and detail), and a
 * network failure (retry banner, nothing was lost).
 */

export interface TrialPrompt {
  kind: "tone" | "sentence";
  text: string;
}

export interface OpenTrial {
  trial_id: string;
  chain_id: string;
  kind: "S" | "T";
  prompt: TrialPrompt;
  completed: number;
  quota: number;
}

export interface SessionDone {
  done: true;
  reason: "quota-reached" | "no-eligible-chains";
  completed: number;
  quota: number;
}

export type NextTrial = OpenTrial | SessionDone;

export function isDone(payload: NextTrial): payload is SessionDone {
  return (payload as SessionDone).done === true;
}

export interface AcceptedResponse {
  accepted: true;
  trial_id: string;
  response: { kind: "tone" | "sentence"; text: string };
  completed: number;
  quota: number;
}

export interface InstructionSection {
  heading: string;
  body: string;
}

export interface InstructionExample {
  task: string;
  prompt: string;
  answer: string;
  why: string;
}

export interface LikertScale {
  min: number;
  max: number;
  min_label: string;
  max_label: string;
}

export interface Instructions {
  kind: string;
  title: string;
  definition: string;
  sections: InstructionSection[];
  examples?: InstructionExample[];
  scale?: LikertScale;
}

export interface Health {
  status: string;
  version: string;
  experiment: string;
  backend: string;
  complete: boolean;
}

/** Server rejected the submission through a validation filter (HTTP 422). */
export class RejectedError extends Error {
  constructor(
    public readonly kind: string,
    public readonly detail: string,
  ) {
    super(`${kind}: ${detail}`);
    this.name = "RejectedError";
  }
}

/** Any other non-2xx answer. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** fetch itself failed; the request may never have left the machine. */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${String(cause)}`);
    this.name = "NetworkError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class Api {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    // bind so the default fetch keeps its expected receiver in browsers
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async health(): Promise<Health> {
    return this.get("/api/health");
  }

  async instructions(kind: string): Promise<Instructions> {
    return this.get(`/api/instructions/${encodeURIComponent(kind)}`);
  }

  async nextTrial(participantId: string): Promise<NextTrial> {
    const id = encodeURIComponent(participantId);
    return this.get(`/api/participant/${id}/next-trial`);
  }

  /** Resolves on acceptance; throws RejectedError when a filter fires. */
  async submitResponse(
    trialId: string,
    text: string,
  ): Promise<AcceptedResponse> {
    const id = encodeURIComponent(trialId);
    return this.post(`/api/trial/${id}/response`, { text });
  }

  async postRating(record: {
    tone: string;
    sentence: string;
    rater_id: string;
    value: number;
  }): Promise<void> {
    await this.post("/api/rating", record);
  }

  async postSimilarity(record: {
    tone_a: string;
    tone_b: string;
    rater_id: string;
    value: number;
  }): Promise<void> {
    await this.post("/api/similarity", record);
  }

  async postFeatureRating(record: {
    tone: string;
    feature: string;
    rater_id: string;
    value: number;
  }): Promise<void> {
    await this.post("/api/feature-rating", record);
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.send(path, { method: "GET" });
    return this.decode<T>(response);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.send(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode<T>(response);
  }

  private async send(path: string, init: RequestInit): Promise<Response> {
    try {
      return await this.fetchFn(this.base + path, init);
    } catch (cause) {
      throw new NetworkError(cause);
    }
  }

  private async decode<T>(response: Response): Promise<T> {
    if (response.ok) {
      return (await response.json()) as T;
    }
    let body: { kind?: string; detail?: string } = {};
    try {
      body = await response.json();
    } catch {
      // non-JSON error body; fall through with the status alone
    }
    if (response.status === 422 && typeof body.kind === "string") {
      throw new RejectedError(body.kind, body.detail ?? "");
    }
    throw new ApiError(response.status, body.detail ?? response.statusText);
  }
}
