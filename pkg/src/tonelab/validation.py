"""Response filters for sentence and tone submissions.

Filters run in a fixed order and the first failing row wins, so a response
gets exactly one rejection reason. Sentence order: word count, grammar hook,
stem overlap with the prompt tone, profanity. Tone order: charset, spelling,
adjective membership, stem overlap with the prompt sentence, profanity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .core import MIN_SENTENCE_WORDS, ConfigError, InputError
from .stemming import stem

TONE_CHARSET = re.compile(r"^[a-zA-Z-]+$")

ERROR_KINDS = (
    "too-short",
    "not-grammatical",
    "bad-charset",
    "not-adjective",
    "misspelled",
    "stem-overlap",
    "profanity",
)


@dataclass(frozen=True)
class ValidationError:
    """A single rejection: which filter row failed and the offending tokens."""

    kind: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ERROR_KINDS:
            raise InputError(f"unknown validation error kind: {self.kind!r}")


@dataclass(frozen=True)
class FilterConfig:
    """Row toggles. The word-count floor is a type invariant and always runs."""

    grammar: bool = False
    spelling: bool = True
    adjective: bool = True
    stem_overlap: bool = True
    profanity: bool = True
    charset: bool = True


def _read_word_file(path: Path) -> frozenset[str]:
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        words.add(line.lower())
    return frozenset(words)


@dataclass(frozen=True)
class Lexicons:
    adjectives: frozenset[str]
    words: frozenset[str]
    profanity: frozenset[str]

    def __post_init__(self) -> None:
        for name in ("adjectives", "words", "profanity"):
            if not getattr(self, name):
                raise ConfigError(f"lexicon {name!r} is empty")

    def check_seed_tones(self, tones) -> None:
        clash = sorted(set(t.lower() for t in tones) & self.profanity)
        if clash:
            raise ConfigError(f"seed tones overlap the profanity list: {clash}")

    @classmethod
    def from_files(cls, adjectives: Path, words: Path, profanity: Path) -> "Lexicons":
        for p in (adjectives, words, profanity):
            if not Path(p).exists():
                raise ConfigError(f"missing lexicon file: {p}")
        return cls(
            adjectives=_read_word_file(Path(adjectives)),
            words=_read_word_file(Path(words)),
            profanity=_read_word_file(Path(profanity)),
        )


_DEFAULT: Optional[Lexicons] = None


def default_lexicons() -> Lexicons:
    global _DEFAULT
    if _DEFAULT is None:
        root = resources.files("tonelab").joinpath("data/lexicons")
        _DEFAULT = Lexicons.from_files(
            Path(str(root.joinpath("adjectives.txt"))),
            Path(str(root.joinpath("words.txt"))),
            Path(str(root.joinpath("profanity.txt"))),
        )
    return _DEFAULT


def default_seed_tones() -> list[str]:
    root = resources.files("tonelab").joinpath("data/lexicons")
    return sorted(_read_word_file(Path(str(root.joinpath("seed_tones.txt")))))


def tokens(text: str) -> list[str]:
    """Case-folded maximal alphabetic runs; punctuation and hyphens split."""
    return re.findall(r"[a-z]+", text.lower())


def contains_profanity(text: str, profanity: frozenset[str]) -> Optional[str]:
    """First profane token, or None. Token-level only, never substrings."""
    for tok in tokens(text):
        if tok in profanity:
            return tok
    return None


def _stem_overlap(response_tokens, prompt_tokens) -> Optional[str]:
    prompt_stems = {stem(t) for t in prompt_tokens}
    for tok in response_tokens:
        if stem(tok) in prompt_stems:
            return tok
    return None


GrammarChecker = Callable[[str], bool]


def validate_sentence(
    text: str,
    prompt_tone: str,
    lexicons: Lexicons,
    config: FilterConfig = FilterConfig(),
    grammar_checker: Optional[GrammarChecker] = None,
) -> Optional[ValidationError]:
    """Return the first failing filter row for a sentence response, else None."""
    text = text.strip()
    count = len(text.split())
    if count <= MIN_SENTENCE_WORDS:
        return ValidationError("too-short", f"{count} words")
    if config.grammar and grammar_checker is not None and not grammar_checker(text):
        return ValidationError("not-grammatical", text)
    if config.stem_overlap:
        hit = _stem_overlap(tokens(text), tokens(prompt_tone))
        if hit is not None:
            return ValidationError("stem-overlap", hit)
    if config.profanity:
        hit = contains_profanity(text, lexicons.profanity)
        if hit is not None:
            return ValidationError("profanity", hit)
    return None


def validate_tone(
    text: str,
    prompt_sentence: str,
    lexicons: Lexicons,
    config: FilterConfig = FilterConfig(),
) -> Optional[ValidationError]:
    """Return the first failing filter row for a tone response, else None."""
    text = text.strip()
    if config.charset and not TONE_CHARSET.match(text):
        return ValidationError("bad-charset", text)
    word = text.lower()
    if config.spelling and word not in lexicons.words:
        return ValidationError("misspelled", word)
    if config.adjective and word not in lexicons.adjectives:
        return ValidationError("not-adjective", word)
    if config.stem_overlap:
        hit = _stem_overlap(tokens(word), tokens(prompt_sentence))
        if hit is not None:
            return ValidationError("stem-overlap", hit)
    if config.profanity:
        hit = contains_profanity(word, lexicons.profanity)
        if hit is not None:
            return ValidationError("profanity", hit)
    return None
