"""Core vocabulary types shared by every stage: tones, sentences, clocks, errors."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from typing import Any, Union

TONE_PATTERN = re.compile(r"^[a-z][a-z-]*$")

# A sentence response must be longer than this many whitespace tokens.
MIN_SENTENCE_WORDS = 5


class ToneLabError(Exception):
    """Base error. ``exit_code`` is what the CLI returns for this failure class."""

    exit_code = 4


class ConfigError(ToneLabError):
    exit_code = 2


class InputError(ToneLabError):
    exit_code = 3


@dataclass(frozen=True)
class Tone:
    """A single lowercase tone adjective (hyphens allowed, e.g. ``matter-of-fact``)."""

    text: str

    def __post_init__(self) -> None:
        if not TONE_PATTERN.match(self.text):
            raise InputError(f"not a canonical tone adjective: {self.text!r}")

    @classmethod
    def canonical(cls, raw: str) -> "Tone":
        return cls(raw.strip().lower())


@dataclass(frozen=True)
class Sentence:
    """A sentence response; must exceed ``MIN_SENTENCE_WORDS`` whitespace tokens."""

    text: str
    word_count: int = field(init=False)

    def __post_init__(self) -> None:
        count = len(self.text.split())
        if count <= MIN_SENTENCE_WORDS:
            raise InputError(
                f"sentence has {count} words, needs more than {MIN_SENTENCE_WORDS}: "
                f"{self.text!r}"
            )
        object.__setattr__(self, "word_count", count)


ChainItem = Union[Tone, Sentence]


def item_kind(item: ChainItem) -> str:
    return "tone" if isinstance(item, Tone) else "sentence"


def item_to_dict(item: ChainItem) -> dict:
    return {"kind": item_kind(item), "text": item.text}


def item_from_dict(doc: dict) -> ChainItem:
    kind = doc.get("kind")
    if kind == "tone":
        return Tone(doc["text"])
    if kind == "sentence":
        return Sentence(doc["text"])
    raise InputError(f"unknown chain item kind: {kind!r}")


class WallClock:
    def now(self) -> float:
        return time.time()


class LogicalClock:
    """Deterministic tick counter so synthetic runs serialize identically."""

    def __init__(self, start: float = 0.0, step: float = 1.0):
        self._t = start
        self._step = step

    def now(self) -> float:
        t = self._t
        self._t += self._step
        return t


def canonical_json(doc: Any) -> str:
    """Stable byte representation: sorted keys, no whitespace variance."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
