"""Response-producing backends: the synthetic oracle, LLM client, templates.

The synthetic oracle samples from an explicit tone-by-sentence joint
distribution, which makes chain output testable against exact marginals.
The LLM backend renders prompt templates and talks to a chat-completion
endpoint over HTTP JSON.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
import requests

from .core import ConfigError, InputError, ToneLabError, canonical_json

PROB_SUM_TOL = 1e-12

RESPONSE_FORMATS = ("adjective", "sentence", "integer_1_to_5", "number_0_to_1")


class ParseError(InputError):
    """LLM reply did not decode to the expected response format."""


class TransportError(ToneLabError):
    """HTTP transport kept failing after the retry budget."""


class AuthError(ToneLabError):
    """Endpoint rejected our credentials; never retried."""


class MalformedResponseError(ToneLabError):
    """Endpoint answered 200 with a payload missing the completion text."""


# --------------------------------------------------------------------------
# synthetic joint distribution


@dataclass(frozen=True)
class SyntheticJoint:
    """Explicit joint p(tone, sentence) as an m-by-n probability matrix."""

    tones: tuple[str, ...]
    sentences: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        m, n = len(self.tones), len(self.sentences)
        if probs.shape != (m, n):
            raise ConfigError(
                f"joint shape {probs.shape} does not match {m} tones x {n} sentences"
            )
        if len(set(self.tones)) != m or len(set(self.sentences)) != n:
            raise ConfigError("joint items must be unique")
        if np.any(probs < 0):
            raise ConfigError("joint has negative mass")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ConfigError(f"joint mass sums to {probs.sum()!r}, not 1")
        if np.any(probs.sum(axis=1) <= 0) or np.any(probs.sum(axis=0) <= 0):
            raise ConfigError("degenerate joint: a tone or sentence has zero mass")

    # -- marginals and conditionals

    def tone_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def sentence_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def tone_index(self, tone: str) -> int:
        try:
            return self.tones.index(tone)
        except ValueError:
            raise InputError(f"unknown tone for this joint: {tone!r}") from None

    def sentence_index(self, sentence: str) -> int:
        try:
            return self.sentences.index(sentence)
        except ValueError:
            raise InputError(f"unknown sentence for this joint: {sentence!r}") from None

    def conditional_tone_given_sentence(self, j: int) -> np.ndarray:
        col = self.probs[:, j]
        return col / col.sum()

    def conditional_sentence_given_tone(self, i: int) -> np.ndarray:
        row = self.probs[i, :]
        return row / row.sum()

    # -- construction / serialization

    @classmethod
    def random(cls, tones, sentences, rng: np.random.Generator,
               concentration: float = 1.0) -> "SyntheticJoint":
        """Dirichlet-random joint; every cell positive, hence ergodic."""
        m, n = len(tones), len(sentences)
        cells = rng.gamma(concentration, 1.0, size=(m, n))
        cells = np.maximum(cells, 1e-12)
        return cls(tuple(tones), tuple(sentences), cells / cells.sum())

    def to_dict(self) -> dict:
        return {
            "tones": list(self.tones),
            "sentences": list(self.sentences),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticJoint":
        return cls(tuple(doc["tones"]), tuple(doc["sentences"]),
                   np.asarray(doc["probs"], dtype=float))


def synthetic_answer_tone(joint: SyntheticJoint, sentence: str,
                          rng: np.random.Generator) -> str:
    """Sample a tone from p(tone | sentence)."""
    j = joint.sentence_index(sentence)
    p = joint.conditional_tone_given_sentence(j)
    return joint.tones[rng.choice(len(p), p=p)]


def synthetic_answer_sentence(joint: SyntheticJoint, tone: str,
                              rng: np.random.Generator) -> str:
    """Sample a sentence from p(sentence | tone)."""
    i = joint.tone_index(tone)
    p = joint.conditional_sentence_given_tone(i)
    return joint.sentences[rng.choice(len(p), p=p)]


# --------------------------------------------------------------------------
# prompt templates

_SLOT = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str
    slots: tuple[str, ...]
    response_format: str

    def __post_init__(self) -> None:
        if self.response_format not in RESPONSE_FORMATS:
            raise ConfigError(f"unknown response format: {self.response_format!r}")
        referenced = set(_SLOT.findall(self.text))
        if referenced != set(self.slots):
            raise ConfigError(
                f"template {self.template_id!r} declares slots {sorted(self.slots)} "
                f"but references {sorted(referenced)}"
            )


def render_prompt(template: PromptTemplate, **values: str) -> str:
    missing = [s for s in template.slots if s not in values]
    if missing:
        raise InputError(f"missing prompt slots {missing} for {template.template_id!r}")

    def fill(match: re.Match) -> str:
        return str(values[match.group(1)])

    rendered = _SLOT.sub(fill, template.text)
    assert not _SLOT.search(rendered)
    return rendered


_TEMPLATE_SPECS = {
    "elicit_tone": (("sentence",), "adjective"),
    "elicit_sentence": (("tone",), "sentence"),
    "rate_fit": (("tone", "sentence"), "integer_1_to_5"),
    "rate_similarity": (("tone_a", "tone_b"), "number_0_to_1"),
    "rate_feature": (("feature", "feature_definition", "tone"), "integer_1_to_5"),
}


def load_templates() -> dict[str, PromptTemplate]:
    """Shipped prompt texts; the wording is method data, edit with care."""
    root = resources.files("tonelab").joinpath("data/prompts")
    out = {}
    for template_id, (slots, fmt) in _TEMPLATE_SPECS.items():
        text = root.joinpath(f"{template_id}.txt").read_text(encoding="utf-8")
        out[template_id] = PromptTemplate(template_id, text.rstrip("\n"), slots, fmt)
    return out


def load_features() -> list[dict]:
    """The four rated tone features: id, display label, definition text."""
    raw = resources.files("tonelab").joinpath("data/features.json").read_text("utf-8")
    return json.loads(raw)


def default_sentence_pool() -> list[str]:
    """Shipped sentences for synthetic joints. Every entry passes the
    sentence filters against every shipped seed tone, so synthetic chains
    never hit a rejection and the transition kernel stays exact."""
    raw = resources.files("tonelab").joinpath("data/sentence_pool.txt").read_text("utf-8")
    return [line.strip() for line in raw.splitlines()
            if line.strip() and not line.startswith("#")]


FEATURE_IDS = ("valence-positive", "aroused", "informational", "relational")


# --------------------------------------------------------------------------
# response parsing

_STRIP_CHARS = " \t\r\n.,;:!?\"'()[]{}`“”‘’…-"
_INT_TOKEN = re.compile(r"-?\d+")
_FLOAT_TOKEN = re.compile(r"-?\d+(?:\.\d+)?")


def parse_response(response_format: str, text: str) -> object:
    """Decode raw completion text into the declared format, or raise ParseError."""
    if response_format == "sentence":
        out = text.strip()
        if not out:
            raise ParseError("empty sentence response")
        return out
    if response_format == "adjective":
        out = text.strip(_STRIP_CHARS).lower()
        if not out or not re.fullmatch(r"[a-z-]+", out):
            raise ParseError(f"expected a single adjective, got {text!r}")
        return out
    if response_format == "integer_1_to_5":
        match = _INT_TOKEN.search(text)
        if not match:
            raise ParseError(f"no integer in {text!r}")
        value = int(match.group())
        if not 1 <= value <= 5:
            raise ParseError(f"rating {value} outside 1..5")
        return value
    if response_format == "number_0_to_1":
        match = _FLOAT_TOKEN.search(text)
        if not match:
            raise ParseError(f"no number in {text!r}")
        value = float(match.group())
        if not 0.0 <= value <= 1.0:
            raise ParseError(f"similarity {value} outside [0, 1]")
        return value
    raise ConfigError(f"unknown response format: {response_format!r}")


# --------------------------------------------------------------------------
# LLM transport


@dataclass(frozen=True)
class LlmParams:
    model: str
    endpoint: str
    temperature: float = 0.8
    auth_env: str = "TONELAB_API_KEY"
    max_retries: int = 3
    timeout_seconds: float = 60.0


def llm_complete(params: LlmParams, prompt: str,
                 log_path: Optional[str] = None,
                 session: Optional[requests.Session] = None) -> str:
    """One chat completion. Retries transient transport failures with backoff;
    auth failures are terminal on first sight."""
    key = os.environ.get(params.auth_env, "")
    headers = {"Content-Type": "application/json"}
    if key:
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": params.model,
        "temperature": params.temperature,
        "messages": [{"role": "user", "content": prompt}],
    }
    http = session or requests
    last_error: Optional[Exception] = None
    for attempt in range(params.max_retries + 1):
        if attempt:
            time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
        try:
            reply = http.post(params.endpoint, json=payload, headers=headers,
                              timeout=params.timeout_seconds)
        except requests.RequestException as exc:
            last_error = exc
            _log_exchange(log_path, payload, error=repr(exc))
            continue
        if reply.status_code in (401, 403):
            _log_exchange(log_path, payload, status=reply.status_code)
            raise AuthError(f"endpoint rejected credentials: HTTP {reply.status_code}")
        if reply.status_code >= 500 or reply.status_code == 429:
            last_error = ToneLabError(f"HTTP {reply.status_code}")
            _log_exchange(log_path, payload, status=reply.status_code)
            continue
        if reply.status_code != 200:
            _log_exchange(log_path, payload, status=reply.status_code)
            raise TransportError(f"unexpected HTTP {reply.status_code}: {reply.text[:200]}")
        try:
            doc = reply.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            _log_exchange(log_path, payload, status=200, error=repr(exc))
            raise MalformedResponseError(f"bad completion payload: {exc!r}") from exc
        _log_exchange(log_path, payload, status=200, response=text)
        return text
    raise TransportError(f"gave up after {params.max_retries + 1} attempts: {last_error!r}")


def _log_exchange(log_path, payload, status=None, response=None, error=None):
    if log_path is None:
        return
    record = {"t": time.time(), "request": payload, "status": status,
              "response": response, "error": error}
    with open(log_path, "a", encoding="utf-8") as f:
        f.write(canonical_json(record) + "\n")


# --------------------------------------------------------------------------
# chain agents (what run_autonomous drives)


class SyntheticChainAgent:
    """Answers S/T trials by sampling the conditionals of an explicit joint."""

    backend_kind = "synthetic"

    def __init__(self, joint: SyntheticJoint):
        self.joint = joint

    def answer(self, trial_kind: str, prompt_text: str, rng: np.random.Generator) -> str:
        if trial_kind == "S":
            return synthetic_answer_sentence(self.joint, prompt_text, rng)
        if trial_kind == "T":
            return synthetic_answer_tone(self.joint, prompt_text, rng)
        raise InputError(f"unknown trial kind: {trial_kind!r}")


class LlmChainAgent:
    """Answers S/T trials through the chat endpoint using shipped templates."""

    backend_kind = "llm"

    def __init__(self, params: LlmParams, templates=None, log_path=None):
        self.params = params
        self.templates = templates or load_templates()
        self.log_path = log_path

    def answer(self, trial_kind: str, prompt_text: str, rng=None) -> str:
        if trial_kind == "S":
            template = self.templates["elicit_sentence"]
            raw = llm_complete(self.params, render_prompt(template, tone=prompt_text),
                               self.log_path)
        elif trial_kind == "T":
            template = self.templates["elicit_tone"]
            raw = llm_complete(self.params, render_prompt(template, sentence=prompt_text),
                               self.log_path)
        else:
            raise InputError(f"unknown trial kind: {trial_kind!r}")
        return str(parse_response(template.response_format, raw))


# --------------------------------------------------------------------------
# synthetic judges for the rating stages

def _likert_from_unit(unit: float, noise_sd: float, rng: np.random.Generator) -> int:
    value = 1.0 + 4.0 * unit + rng.normal(0.0, noise_sd)
    return int(np.clip(round(value), 1, 5))


class SyntheticRater:
    """Quality-of-fit ratings derived from how dominant a tone is for a sentence."""

    def __init__(self, joint: SyntheticJoint, noise_sd: float = 0.5):
        self.joint = joint
        self.noise_sd = noise_sd

    def rate(self, tone: str, sentence: str, rng: np.random.Generator) -> int:
        i = self.joint.tone_index(tone)
        j = self.joint.sentence_index(sentence)
        conditional = self.joint.conditional_tone_given_sentence(j)
        strength = conditional[i] / conditional.max()
        return _likert_from_unit(float(strength), self.noise_sd, rng)


class SyntheticSimilarityJudge:
    """Pair similarity from the correlation of conditional sentence profiles."""

    def __init__(self, joint: SyntheticJoint, noise_sd: float = 0.5):
        self.joint = joint
        self.noise_sd = noise_sd

    def judge(self, tone_a: str, tone_b: str, rng: np.random.Generator) -> int:
        pa = self.joint.conditional_sentence_given_tone(self.joint.tone_index(tone_a))
        pb = self.joint.conditional_sentence_given_tone(self.joint.tone_index(tone_b))
        if np.std(pa) == 0 or np.std(pb) == 0:
            unit = 1.0 if tone_a == tone_b else 0.5
        else:
            unit = (float(np.corrcoef(pa, pb)[0, 1]) + 1.0) / 2.0
        return _likert_from_unit(unit, self.noise_sd, rng)


class SyntheticFeatureRater:
    """Stable per-(tone, feature) latents plus rater noise."""

    def __init__(self, joint: SyntheticJoint, seed: int = 0, noise_sd: float = 0.5):
        self.joint = joint
        self.noise_sd = noise_sd
        latent_rng = np.random.default_rng(seed)
        self.latents = {
            (tone, feature): float(latent_rng.uniform())
            for tone in joint.tones
            for feature in FEATURE_IDS
        }

    def rate(self, tone: str, feature: str, rng: np.random.Generator) -> int:
        if (tone, feature) not in self.latents:
            raise InputError(f"unknown tone/feature pair: {(tone, feature)!r}")
        return _likert_from_unit(self.latents[(tone, feature)], self.noise_sd, rng)
