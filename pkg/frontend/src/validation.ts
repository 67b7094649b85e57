/**
 * Client-side pre-validation, a strict subset of the server's filters.
 *
 * Only the two rules a browser can check without the lexicons are mirrored
 * here: the sentence word-count floor and the tone character set. Both use
 * the exact counting the server uses (whitespace-separated chunks, same
 * regex), so anything accepted here can still be rejected by the server's
 * deeper filters (spelling, stem overlap, profanity) but never for length
 * or charset. The server stays authoritative either way.
 */

// a sentence must have MORE than this many words
export const MIN_SENTENCE_WORDS = 5;

// single word, letters and hyphens only; case is folded server-side
export const TONE_PATTERN = /^[a-zA-Z-]+$/;

export interface ClientProblem {
  kind: "empty" | "too-short" | "bad-charset";
  message: string;
}

export function wordCount(text: string): number {
  const trimmed = text.trim();
  if (trimmed === "") return 0;
  return trimmed.split(/\s+/).length;
}

export function sentenceProblem(text: string): ClientProblem | null {
  const count = wordCount(text);
  if (count === 0) {
    return { kind: "empty", message: "Write a sentence before submitting." };
  }
  if (count <= MIN_SENTENCE_WORDS) {
    return {
      kind: "too-short",
      message:
        `Sentences need more than ${MIN_SENTENCE_WORDS} words; ` +
        `this has ${count}.`,
    };
  }
  return null;
}

export function toneProblem(text: string): ClientProblem | null {
  const trimmed = text.trim();
  if (trimmed === "") {
    return { kind: "empty", message: "Name a tone before submitting." };
  }
  if (!TONE_PATTERN.test(trimmed)) {
    return {
      kind: "bad-charset",
      message: "Tones are a single word: letters and hyphens only.",
    };
  }
  return null;
}
