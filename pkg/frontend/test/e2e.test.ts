// @vitest-environment happy-dom
// @vitest-environment-options {"settings": {"fetch": {"disableSameOriginPolicy": true}}}
//
// End-to-end drive of the human-mode experiment: a real `tonelab serve`
// process on a scratch port, and two scripted browser sessions (two mounted
// app instances, as in two tabs) that carry 2 chains through 4 iterations
// each, rotating to a fresh participant whenever the server ends a session.
// Afterwards the server's trial log must match the scripted submissions
// exactly, and the one sentence the client rejected must never have left
// the browser.

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, expect, test } from "vitest";

import { mount } from "../src/app.js";

const BLOCKED_SENTENCE = "Way too short here.";

const SENTENCES = [
  "We should meet near the station before lunch on Monday.",
  "They plan to visit the museum after the first train arrives.",
  "Please bring your notes when you stop by the office later.",
  "The garden behind the library stays open until nine tonight.",
  "Our neighbors painted their fence twice during the spring.",
  "A quiet road runs along the river past the old mill.",
  "She keeps the spare key under the flowerpot by the door.",
  "Everyone gathered around the long table to share the meal.",
];

const TONES = ["gentle", "hopeful", "solemn", "witty", "earnest"];

// crude four-letter-prefix stem guard; the pools above are built to be
// disjoint from every prompt, this only catches future edits to them
function sharesStem(sentence: string, tone: string): boolean {
  const head = tone.toLowerCase().slice(0, 4);
  return sentence
    .toLowerCase()
    .split(/[^a-z]+/)
    .some(
      (word) =>
        word.length > 0 &&
        (word.startsWith(head) || tone.toLowerCase().startsWith(word.slice(0, 4))),
    );
}

let sentenceCursor = 0;
let toneCursor = 0;

function nextSentence(promptTone: string): string {
  for (let i = 0; i < SENTENCES.length; i++) {
    const candidate = SENTENCES[(sentenceCursor + i) % SENTENCES.length]!;
    if (!sharesStem(candidate, promptTone)) {
      sentenceCursor += i + 1;
      return candidate;
    }
  }
  throw new Error(`no scripted sentence avoids the tone ${promptTone}`);
}

function nextTone(promptSentence: string): string {
  for (let i = 0; i < TONES.length; i++) {
    const candidate = TONES[(toneCursor + i) % TONES.length]!;
    if (!sharesStem(promptSentence, candidate)) {
      toneCursor += i + 1;
      return candidate;
    }
  }
  throw new Error("no scripted tone avoids the prompt sentence");
}

// -- harness -------------------------------------------------------------

interface Recorded {
  method: string;
  url: string;
  body: string;
}

interface Submission {
  participant: string;
  trial_id: string;
  chain_id: string;
  kind: string;
  text: string;
}

let workdir: string;
let server: ChildProcess;
let serverLog = "";
let base: string;
const requests: Recorded[] = [];
const submissions: Submission[] = [];

const realFetch = globalThis.fetch.bind(globalThis);

const spyFetch: typeof fetch = async (input, init) => {
  requests.push({
    method: init?.method ?? "GET",
    url: String(input),
    body: typeof init?.body === "string" ? init.body : "",
  });
  return realFetch(input, init);
};

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.on("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitForHealth(timeoutMs: number): Promise<void> {
  const start = Date.now();
  for (;;) {
    try {
      const response = await realFetch(`${base}/api/health`);
      if (response.ok) return;
    } catch {
      // not accepting connections yet
    }
    if (Date.now() - start > timeoutMs) {
      throw new Error(`server never came up; log so far:\n${serverLog}`);
    }
    await sleep(100);
  }
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "tonelab-webui-e2e-"));
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  const configPath = join(workdir, "config.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      experiment: {
        experiment_id: "webui-e2e",
        backend: { kind: "human" },
        n_chains: 2,
        n_iterations: 4,
        trials_min: 1,
        trials_max: 4,
        rng_seed: 0,
      },
      serve: { host: "127.0.0.1", port },
    }),
  );
  server = spawn(
    "tonelab",
    ["serve", "--config", configPath, "--out", join(workdir, "state")],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk) => {
    serverLog += String(chunk);
  });
  server.stderr?.on("data", (chunk) => {
    serverLog += String(chunk);
  });
  await waitForHealth(15_000);
}, 30_000);

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await Promise.race([
      new Promise((resolve) => server.once("exit", resolve)),
      sleep(3000).then(() => server.kill("SIGKILL")),
    ]);
  }
  rmSync(workdir, { recursive: true, force: true });
});

// -- DOM driving ------------------------------------------------------------

function q<T extends Element>(scope: ParentNode, selector: string): T {
  const found = scope.querySelector(selector);
  if (found === null) {
    const screen =
      scope instanceof HTMLElement ? scope.dataset.screen : "unknown";
    throw new Error(`no ${selector} on screen ${screen}`);
  }
  return found as T;
}

async function waitFor(
  check: () => boolean,
  what: string,
  timeoutMs = 8000,
): Promise<void> {
  const start = Date.now();
  while (!check()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await sleep(10);
  }
}

/** Submit through the form and wait until the app leaves this trial. */
async function submitAndAdvance(
  container: HTMLElement,
  trialId: string,
  text: string,
): Promise<void> {
  const form = q<HTMLElement>(container, ".task");
  const input = q<HTMLTextAreaElement | HTMLInputElement>(
    form,
    ".response",
  );
  input.value = text;
  input.dispatchEvent(new Event("input"));
  q<HTMLButtonElement>(form, "button.submit").click();
  await waitFor(
    () => {
      const error = container.querySelector(".inline-error");
      const current = container.querySelector<HTMLElement>(".task");
      if (error !== null && current?.dataset.trialId === trialId) {
        throw new Error(
          `scripted answer ${JSON.stringify(text)} was rejected: ` +
            error.textContent,
        );
      }
      return (
        container.dataset.screen === "done" ||
        (current !== null && current.dataset.trialId !== trialId)
      );
    },
    `advance past ${trialId}`,
  );
}

async function acknowledgeInstructions(container: HTMLElement): Promise<void> {
  await waitFor(
    () => container.dataset.screen === "instructions",
    "instructions screen",
  );
  const ack = q<HTMLInputElement>(container, ".ack");
  ack.checked = true;
  ack.dispatchEvent(new Event("change"));
  q<HTMLButtonElement>(container, "button.begin").click();
  await waitFor(
    () => container.dataset.screen !== "instructions",
    "first trial after acknowledging",
  );
}

interface ParticipantOptions {
  blockProbe?: boolean;
  refreshProbe?: boolean;
}

/** One participant's full pass inside the given browser-session container. */
async function runParticipant(
  container: HTMLElement,
  participant: string,
  options: ParticipantOptions = {},
): Promise<void> {
  mount(container, { participantId: participant, base, fetchFn: spyFetch });
  await acknowledgeInstructions(container);
  let blockProbePending = options.blockProbe === true;
  let refreshProbePending = options.refreshProbe === true;

  while (container.dataset.screen === "trial") {
    const form = q<HTMLElement>(container, ".task");
    const trialId = form.dataset.trialId!;
    const kind = form.dataset.kind!;
    const chainId = form.dataset.chainId!;
    const prompt = q<HTMLElement>(form, ".prompt").textContent ?? "";

    if (refreshProbePending) {
      // a reload mid-trial must land on the very same open trial
      refreshProbePending = false;
      mount(container, {
        participantId: participant,
        base,
        fetchFn: spyFetch,
      });
      await acknowledgeInstructions(container);
      const reissued = q<HTMLElement>(container, ".task");
      expect(reissued.dataset.trialId).toBe(trialId);
      continue;
    }

    if (kind === "S" && blockProbePending) {
      blockProbePending = false;
      const input = q<HTMLTextAreaElement>(form, "textarea.response");
      input.value = BLOCKED_SENTENCE;
      const postsBefore = requests.filter((r) => r.method === "POST").length;
      q<HTMLButtonElement>(form, "button.submit").click();
      await waitFor(
        () => container.querySelector(".inline-error") !== null,
        "client-side rejection",
      );
      const error = q<HTMLElement>(container, ".inline-error");
      expect(error.textContent).toContain("more than 5 words");
      expect(error.textContent).toContain("4");
      // still on the same trial, and nothing was POSTed anywhere
      expect(
        q<HTMLElement>(container, ".task").dataset.trialId,
      ).toBe(trialId);
      expect(requests.filter((r) => r.method === "POST")).toHaveLength(
        postsBefore,
      );
    }

    const text = kind === "S" ? nextSentence(prompt) : nextTone(prompt);
    await submitAndAdvance(container, trialId, text);
    submissions.push({
      participant,
      trial_id: trialId,
      chain_id: chainId,
      kind,
      text,
    });
  }

  expect(container.dataset.screen).toBe("done");
}

// -- the drive ---------------------------------------------------------------

interface LogEvent {
  trial_id: string;
  chain_id: string;
  kind: string;
  agent_id: string;
  status: string;
  response: { kind: string; text: string } | null;
}

test("two scripted sessions carry two chains to completion", async () => {
  const started = Date.now();

  const tabA = document.createElement("div");
  const tabB = document.createElement("div");
  document.body.append(tabA, tabB);

  // the two sessions alternate participants; each participant keeps going
  // until the server shows them the done screen
  await runParticipant(tabA, "pa-1", { blockProbe: true });
  await runParticipant(tabB, "pb-1");
  await runParticipant(tabA, "pa-2", { refreshProbe: true });
  await runParticipant(tabB, "pb-2");

  // both chains reached the configured length, so the experiment reports
  // itself complete and has nothing left for a fresh participant
  const health = await (await realFetch(`${base}/api/health`)).json();
  expect(health.complete).toBe(true);
  const leftover = await (
    await realFetch(`${base}/api/participant/p-late/next-trial`)
  ).json();
  expect(leftover.done).toBe(true);
  expect(leftover.reason).toBe("no-eligible-chains");

  // the server's trial log matches the scripted submissions exactly
  const rawLog = readFileSync(join(workdir, "state", "trials.jsonl"), "utf-8");
  const events = rawLog
    .trim()
    .split("\n")
    .map((line) => JSON.parse(line) as LogEvent);

  const byStatus = new Map<string, LogEvent[]>();
  for (const event of events) {
    const bucket = byStatus.get(event.status) ?? [];
    bucket.push(event);
    byStatus.set(event.status, bucket);
  }
  expect(byStatus.get("open") ?? []).toHaveLength(8);
  expect(byStatus.get("accepted") ?? []).toHaveLength(8);
  expect(byStatus.get("rejected") ?? []).toHaveLength(0);
  expect(byStatus.get("expired") ?? []).toHaveLength(0);

  const logged = new Map(
    (byStatus.get("accepted") ?? []).map((event) => [
      event.trial_id,
      {
        participant: event.agent_id,
        chain_id: event.chain_id,
        kind: event.kind,
        text: event.response?.text,
      },
    ]),
  );
  expect(submissions).toHaveLength(8);
  expect(logged.size).toBe(8);
  for (const sub of submissions) {
    expect(logged.get(sub.trial_id)).toEqual({
      participant: sub.participant,
      chain_id: sub.chain_id,
      kind: sub.kind,
      text: sub.text,
    });
  }

  // each chain advanced through 4 iterations, alternating S and T
  for (const chain of ["c-0000", "c-0001"]) {
    const kinds = (byStatus.get("accepted") ?? [])
      .filter((event) => event.chain_id === chain)
      .sort((a, b) => a.trial_id.localeCompare(b.trial_id))
      .map((event) => event.kind);
    expect(kinds).toEqual(["S", "T", "S", "T"]);
  }

  // the client-rejected sentence never reached the server: it is absent
  // from every request that left the browser and from the whole log
  expect(rawLog).not.toContain(BLOCKED_SENTENCE);
  for (const request of requests) {
    expect(request.body).not.toContain(BLOCKED_SENTENCE);
  }

  expect(Date.now() - started).toBeLessThan(60_000);
}, 60_000);
