"""Judgment experiments on top of elicited tones: quality-of-fit ratings,
pairwise tone similarity, and feature ratings, with their aggregation rules.

Capture is append-only line-delimited JSON; aggregation happens on an
immutable snapshot of the records. Likert values are integers at capture
and become unrounded reals after averaging.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

from .agents import FEATURE_IDS
from .core import ConfigError, InputError, canonical_json

LIKERT_VALUES = (1, 2, 3, 4, 5)
DEFAULT_SESSION_SIZE = 12
MISSING_POLICIES = ("error", "fill-midpoint")
LIKERT_MIDPOINT = 3.0


def _check_likert(value: int) -> int:
    if not isinstance(value, int) or value not in LIKERT_VALUES:
        raise InputError(f"rating must be an integer in 1..5, got {value!r}")
    return value


@dataclass(frozen=True)
class RatingRecord:
    """One quality-of-fit judgment: how well a tone fits a sentence."""

    tone: str
    sentence: str
    rater_id: str
    value: int
    experiment: str = "fit"

    def __post_init__(self) -> None:
        _check_likert(self.value)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "tone": self.tone,
                "sentence": self.sentence, "rater_id": self.rater_id,
                "value": self.value}


@dataclass(frozen=True)
class SimilarityRecord:
    """One pairwise tone similarity judgment on the 1..5 scale. Pairs are
    unordered and may repeat a tone (raters do see self pairs)."""

    tone_a: str
    tone_b: str
    rater_id: str
    value: int
    experiment: str = "similarity"

    def __post_init__(self) -> None:
        _check_likert(self.value)

    def pair(self) -> tuple[str, str]:
        return tuple(sorted((self.tone_a, self.tone_b)))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "tone_a": self.tone_a,
                "tone_b": self.tone_b, "rater_id": self.rater_id,
                "value": self.value}


@dataclass(frozen=True)
class FeatureRecord:
    """One tone-by-feature judgment on the 1..5 scale."""

    tone: str
    feature: str
    rater_id: str
    value: int
    experiment: str = "feature"

    def __post_init__(self) -> None:
        _check_likert(self.value)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "tone": self.tone,
                "feature": self.feature, "rater_id": self.rater_id,
                "value": self.value}


_RECORD_KINDS = {"fit": RatingRecord, "similarity": SimilarityRecord,
                 "feature": FeatureRecord}


def record_from_dict(doc: dict):
    kind = doc.get("experiment")
    cls = _RECORD_KINDS.get(kind)
    if cls is None:
        raise InputError(f"unknown record experiment tag: {kind!r}")
    fields = {k: v for k, v in doc.items() if k != "experiment"}
    return cls(**fields)


def write_records(path, records) -> None:
    with open(path, "a", encoding="utf-8") as f:
        for record in records:
            f.write(canonical_json(record.to_dict()) + "\n")


def read_records(path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(record_from_dict(json.loads(line)))
            except (ValueError, TypeError, InputError) as exc:
                raise InputError(
                    f"corrupt record file {path} at line {lineno}: {exc}") from exc
    return out


# --------------------------------------------------------------------------
# aggregated matrices


@dataclass
class RatingMatrix:
    """Mean quality-of-fit per (tone, sentence); each row is that tone's
    embedding over the shared sentence list."""

    tones: tuple[str, ...]
    sentences: tuple[str, ...]
    means: np.ndarray
    counts: np.ndarray
    domain: str = ""

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        m, n = len(self.tones), len(self.sentences)
        if self.means.shape != (m, n) or self.counts.shape != (m, n):
            raise ConfigError(f"matrix shape mismatch for {m} tones x {n} sentences")
        observed = self.counts > 0
        if observed.any():
            vals = self.means[observed]
            if vals.min() < 1.0 - 1e-9 or vals.max() > 5.0 + 1e-9:
                raise ConfigError("observed means fall outside the 1..5 scale")

    def row(self, tone: str) -> np.ndarray:
        try:
            return self.means[self.tones.index(tone)]
        except ValueError:
            raise InputError(f"unknown tone: {tone!r}") from None


@dataclass
class SimilarityMatrix:
    """Pairwise tone similarity on [0,1]; symmetric, unit diagonal."""

    tones: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        m = len(self.tones)
        if self.values.shape != (m, m):
            raise ConfigError(f"similarity matrix must be {m}x{m}")
        if not np.allclose(self.values, self.values.T):
            raise ConfigError("similarity matrix must be symmetric")
        if self.values.min() < -1e-9 or self.values.max() > 1.0 + 1e-9:
            raise ConfigError("similarity values must lie in [0, 1]")
        if not np.allclose(np.diag(self.values), 1.0):
            raise ConfigError("similarity diagonal must be 1.0")


@dataclass
class FeatureRatingMatrix:
    """Mean 1..5 rating of each tone on the four interpretive features."""

    tones: tuple[str, ...]
    features: tuple[str, ...]
    means: np.ndarray

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=float)
        if self.features != tuple(FEATURE_IDS):
            raise ConfigError(
                f"features must be exactly {FEATURE_IDS}, got {self.features}")
        if self.means.shape != (len(self.tones), len(self.features)):
            raise ConfigError("feature matrix shape mismatch")
        if self.means.min() < 1.0 - 1e-9 or self.means.max() > 5.0 + 1e-9:
            raise ConfigError("feature means fall outside the 1..5 scale")

    def column(self, feature: str) -> np.ndarray:
        try:
            return self.means[:, self.features.index(feature)]
        except ValueError:
            raise InputError(f"unknown feature: {feature!r}") from None


# --------------------------------------------------------------------------
# scheduling


@dataclass(frozen=True)
class RatingSlot:
    tone: str
    sentence: str
    rater_slot: int


def schedule_rating_plan(tones: Sequence[str], sentences: Sequence[str],
                         repeats: int, *, session_size: int = DEFAULT_SESSION_SIZE,
                         n_raters: Optional[int] = None,
                         rng: Optional[np.random.Generator] = None) -> list[RatingSlot]:
    """Assign every (tone, sentence) pair to rater sessions, `repeats` times.

    Pairs are shuffled independently per repeat and chunked into sessions of
    at most session_size trials. A session only ever draws from one repeat's
    pairs, so no rater slot sees the same pair twice. With an explicit
    n_raters the plan fails loudly when the workforce cannot cover the load.
    """
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    if session_size < 1:
        raise ConfigError("session_size must be at least 1")
    pairs = [(t, s) for t in tones for s in sentences]
    if not pairs:
        raise ConfigError("empty rating plan: no tones or no sentences")
    total = len(pairs) * repeats
    if n_raters is not None and session_size * n_raters < total:
        raise ConfigError(
            f"infeasible plan: {n_raters} raters x {session_size} trials "
            f"< {total} required slots")
    rng = rng or np.random.default_rng(0)
    plan = []
    rater = 0
    for _ in range(repeats):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), session_size):
            for k in order[start:start + session_size]:
                tone, sentence = pairs[k]
                plan.append(RatingSlot(tone, sentence, rater))
            rater += 1
    return plan


def schedule_similarity_plan(tones: Sequence[str], repeats: int, *,
                             session_size: int = DEFAULT_SESSION_SIZE,
                             rng: Optional[np.random.Generator] = None
                             ) -> list[tuple[str, str, int]]:
    """Same chunking scheme over the unordered tone pairs.

    Pairs include each tone with itself, so m tones yield m(m+1)/2 pairs;
    40 tones yield 820. Self pairs are shown to raters like any other, even
    though the aggregate keeps its diagonal pinned at 1.0.
    """
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    pairs = list(combinations_with_replacement(sorted(set(tones)), 2))
    if not pairs:
        raise ConfigError("need at least one tone")
    rng = rng or np.random.default_rng(0)
    plan = []
    rater = 0
    for _ in range(repeats):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), session_size):
            for k in order[start:start + session_size]:
                a, b = pairs[k]
                plan.append((a, b, rater))
            rater += 1
    return plan


# --------------------------------------------------------------------------
# aggregation


def aggregate_matrix(records: Sequence[RatingRecord], tones: Sequence[str],
                     sentences: Sequence[str], *, missing_policy: str = "error",
                     domain: str = "") -> RatingMatrix:
    """Per-cell arithmetic mean of fit ratings over the full tone/sentence grid.

    Cells may hold more ratings than the plan asked for (real collections
    over-recruit); they are averaged all the same. Empty cells either raise
    or take the scale midpoint, per missing_policy.
    """
    if missing_policy not in MISSING_POLICIES:
        raise ConfigError(f"unknown missing_policy: {missing_policy!r}")
    tones = tuple(tones)
    sentences = tuple(sentences)
    tone_ix = {t: i for i, t in enumerate(tones)}
    sent_ix = {s: j for j, s in enumerate(sentences)}
    totals = np.zeros((len(tones), len(sentences)))
    counts = np.zeros((len(tones), len(sentences)), dtype=int)
    for record in records:
        if record.tone not in tone_ix:
            raise InputError(f"record references unknown tone {record.tone!r}")
        if record.sentence not in sent_ix:
            raise InputError(f"record references unknown sentence {record.sentence!r}")
        i, j = tone_ix[record.tone], sent_ix[record.sentence]
        totals[i, j] += record.value
        counts[i, j] += 1
    means = np.full_like(totals, LIKERT_MIDPOINT)
    observed = counts > 0
    means[observed] = totals[observed] / counts[observed]
    if not observed.all() and missing_policy == "error":
        i, j = np.argwhere(~observed)[0]
        raise InputError(
            f"no ratings for cell ({tones[i]!r}, {sentences[j]!r}) "
            f"and missing_policy is 'error'")
    return RatingMatrix(tones, sentences, means, counts, domain)


def aggregate_similarity(records: Sequence[SimilarityRecord],
                         tones: Sequence[str]) -> SimilarityMatrix:
    """Mean per unordered pair, mapped affinely from [1,5] onto [0,1].

    Every pair of distinct tones must be covered. Self-pair records are
    consumed without complaint but the diagonal is pinned at 1.0 anyway;
    downstream geometry needs a constant self-similarity, and 1.0 is the
    only defensible one.
    """
    tones = tuple(tones)
    index = {t: i for i, t in enumerate(tones)}
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for record in records:
        for tone in (record.tone_a, record.tone_b):
            if tone not in index:
                raise InputError(f"record references unknown tone {tone!r}")
        key = record.pair()
        sums[key] = sums.get(key, 0.0) + record.value
        counts[key] = counts.get(key, 0) + 1
    values = np.eye(len(tones))
    for a, b in combinations(sorted(tones), 2):
        key = (a, b)
        if key not in counts:
            raise InputError(f"no similarity ratings for pair {key!r}")
        mean = sums[key] / counts[key]
        unit = (mean - 1.0) / 4.0
        values[index[a], index[b]] = unit
        values[index[b], index[a]] = unit
    return SimilarityMatrix(tones, values)


def aggregate_features(records: Sequence[FeatureRecord],
                       tones: Sequence[str]) -> FeatureRatingMatrix:
    """Mean per (tone, feature) cell; every cell must be covered."""
    tones = tuple(tones)
    tone_ix = {t: i for i, t in enumerate(tones)}
    feat_ix = {f: j for j, f in enumerate(FEATURE_IDS)}
    totals = np.zeros((len(tones), len(FEATURE_IDS)))
    counts = np.zeros_like(totals, dtype=int)
    for record in records:
        if record.tone not in tone_ix:
            raise InputError(f"record references unknown tone {record.tone!r}")
        if record.feature not in feat_ix:
            raise InputError(f"record references unknown feature {record.feature!r}")
        totals[tone_ix[record.tone], feat_ix[record.feature]] += record.value
        counts[tone_ix[record.tone], feat_ix[record.feature]] += 1
    if not (counts > 0).all():
        i, j = np.argwhere(counts == 0)[0]
        raise InputError(
            f"no ratings for cell ({tones[i]!r}, {FEATURE_IDS[j]!r})")
    return FeatureRatingMatrix(tones, tuple(FEATURE_IDS), totals / counts)


# --------------------------------------------------------------------------
# CSV export / import


def _write_grid(path, columns, labels, rows, fmt) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["tone"] + list(columns))
        for label, row in zip(labels, rows):
            writer.writerow([label] + [fmt(v) for v in row])


def _read_grid(path) -> tuple[list[str], list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "tone":
            raise InputError(f"{path}: expected a CSV with a leading 'tone' column")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path} line {lineno}: ragged row")
            labels.append(row[0])
            rows.append(row[1:])
    return header[1:], labels, rows


def _float_cell(v) -> str:
    return repr(float(v))


def rating_matrix_to_csv(matrix: RatingMatrix, path, counts_path=None) -> None:
    _write_grid(path, matrix.sentences, matrix.tones, matrix.means, _float_cell)
    if counts_path is not None:
        _write_grid(counts_path, matrix.sentences, matrix.tones, matrix.counts, int)


def rating_matrix_from_csv(path, counts_path=None, domain: str = "") -> RatingMatrix:
    sentences, tones, rows = _read_grid(path)
    means = np.array(rows, dtype=float)
    if counts_path is not None:
        _, _, count_rows = _read_grid(counts_path)
        counts = np.array(count_rows, dtype=int)
    else:
        counts = np.ones_like(means, dtype=int)
    return RatingMatrix(tuple(tones), tuple(sentences), means, counts, domain)


def similarity_matrix_to_csv(matrix: SimilarityMatrix, path) -> None:
    _write_grid(path, matrix.tones, matrix.tones, matrix.values, _float_cell)


def similarity_matrix_from_csv(path) -> SimilarityMatrix:
    header, tones, rows = _read_grid(path)
    if header != list(tones):
        raise InputError(f"{path}: similarity rows and columns disagree")
    return SimilarityMatrix(tuple(tones), np.array(rows, dtype=float))


def feature_matrix_to_csv(matrix: FeatureRatingMatrix, path) -> None:
    _write_grid(path, matrix.features, matrix.tones, matrix.means, _float_cell)


def feature_matrix_from_csv(path) -> FeatureRatingMatrix:
    header, tones, rows = _read_grid(path)
    return FeatureRatingMatrix(tuple(tones), tuple(header),
                               np.array(rows, dtype=float))
