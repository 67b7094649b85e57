"""Statistics and geometry over collected data: tone histograms and entropy,
correlation matrices, split-half reliability, MDS with stress majorization,
feature arrows, nearest-neighbor matching, TF-IDF, and the exact stationary
distribution of the synthetic Gibbs chain.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .agents import SyntheticJoint
from .core import ConfigError, InputError
from .ratings import FeatureRatingMatrix, RatingMatrix
from .validation import tokens

CORRELATION_KINDS = ("intra", "cross", "combined")
PARTITION_UNITS = ("trials", "per-pair-ratings", "sentences")


# --------------------------------------------------------------------------
# histograms, entropy, taxonomy


@dataclass
class ToneHistogram:
    counts: dict[str, int]
    total: int = field(init=False)

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.counts.values()):
            raise InputError("negative histogram count")
        self.total = sum(self.counts.values())

    def top(self, k: int) -> list[str]:
        """The k most frequent tones; count ties resolve lexicographically."""
        ranked = sorted(self.counts, key=lambda t: (-self.counts[t], t))
        return ranked[:k]


def tone_histogram(annotations: Sequence[str]) -> ToneHistogram:
    return ToneHistogram(dict(Counter(annotations)))


def entropy_bits(hist: ToneHistogram) -> float:
    """Shannon entropy (base 2) of the empirical tone distribution."""
    if hist.total == 0:
        raise InputError("entropy of an empty histogram is undefined")
    p = np.array([c for c in hist.counts.values() if c > 0], dtype=float)
    p /= hist.total
    return float(-(p * np.log2(p)).sum())


def select_taxonomy(hist_a: ToneHistogram, hist_b: ToneHistogram,
                    k: int) -> list[str]:
    """Union of each histogram's top k tones, ordered by combined frequency."""
    if k < 1:
        raise ConfigError("taxonomy size must be at least 1")
    chosen = set(hist_a.top(k)) | set(hist_b.top(k))
    combined = {t: hist_a.counts.get(t, 0) + hist_b.counts.get(t, 0)
                for t in chosen}
    return sorted(chosen, key=lambda t: (-combined[t], t))


# --------------------------------------------------------------------------
# correlation machinery


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise InputError("pearson needs two equal-length vectors of length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0:
        raise InputError("pearson is undefined for a zero-variance vector")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


@dataclass
class CorrelationMatrix:
    row_labels: tuple
    col_labels: tuple
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in CORRELATION_KINDS:
            raise ConfigError(f"unknown correlation kind: {self.kind!r}")
        shape = (len(self.row_labels), len(self.col_labels))
        if self.values.shape != shape:
            raise ConfigError(f"correlation shape {self.values.shape} != {shape}")
        if np.nanmin(self.values) < -1 - 1e-12 or np.nanmax(self.values) > 1 + 1e-12:
            raise ConfigError("correlations must lie in [-1, 1]")
        if self.kind in ("intra", "combined"):
            if self.row_labels != self.col_labels:
                raise ConfigError(f"{self.kind} matrix needs matching labels")
            if not np.allclose(self.values, self.values.T, equal_nan=True):
                raise ConfigError(f"{self.kind} matrix must be symmetric")
            if not np.allclose(np.diag(self.values), 1.0):
                raise ConfigError(f"{self.kind} matrix must have a unit diagonal")

    def value(self, row, col) -> float:
        return float(self.values[self.row_labels.index(row),
                                 self.col_labels.index(col)])


def _standardized_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    """Rows scaled to zero mean and unit norm, so correlation is a matmul."""
    centered = matrix - matrix.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1, keepdims=True)
    flat = np.where(norms.ravel() == 0)[0]
    if flat.size:
        raise InputError(f"degenerate {what} row (constant ratings) at index {flat[0]}")
    return centered / norms


def intra_correlation(rm: RatingMatrix) -> CorrelationMatrix:
    """Tone-by-tone correlation of rating rows within one domain."""
    if len(rm.sentences) < 2:
        raise InputError("need at least two sentences to correlate rows")
    z = _standardized_rows(rm.means, f"{rm.domain or 'rating'}")
    values = np.clip(z @ z.T, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    values = (values + values.T) / 2.0
    return CorrelationMatrix(tuple(rm.tones), tuple(rm.tones), values, "intra")


def cross_correlation(rm_a: RatingMatrix, rm_b: RatingMatrix) -> CorrelationMatrix:
    """Correlation of every domain-A tone row with every domain-B tone row,
    over the shared sentence list. Generally asymmetric."""
    if tuple(rm_a.sentences) != tuple(rm_b.sentences):
        raise InputError("cross correlation requires identical sentence lists")
    za = _standardized_rows(rm_a.means, rm_a.domain or "first")
    zb = _standardized_rows(rm_b.means, rm_b.domain or "second")
    values = np.clip(za @ zb.T, -1.0, 1.0)
    return CorrelationMatrix(tuple(rm_a.tones), tuple(rm_b.tones), values, "cross")


def combined_matrix(rm_a: RatingMatrix, rm_b: RatingMatrix) -> CorrelationMatrix:
    """Block matrix [[intra_a, cross], [cross.T, intra_b]] over domain-tagged
    tone labels; this is what the shared MDS space is built from."""
    domain_a = rm_a.domain or "a"
    domain_b = rm_b.domain or "b"
    if domain_a == domain_b:
        raise ConfigError("combined matrix needs two distinct domain tags")
    intra_a = intra_correlation(rm_a)
    intra_b = intra_correlation(rm_b)
    cross = cross_correlation(rm_a, rm_b)
    top = np.hstack([intra_a.values, cross.values])
    bottom = np.hstack([cross.values.T, intra_b.values])
    values = np.vstack([top, bottom])
    labels = tuple((t, domain_a) for t in rm_a.tones) + \
        tuple((t, domain_b) for t in rm_b.tones)
    return CorrelationMatrix(labels, labels, values, "combined")


# --------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    ci_low: float
    ci_high: float
    n_replicates: int
    rng_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not (self.ci_low <= self.ci_high):
            raise ConfigError("bootstrap CI bounds are inverted")


def _as_rng(rng) -> tuple[np.random.Generator, Optional[int]]:
    if rng is None:
        return np.random.default_rng(0), 0
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    return rng, None


def bootstrap_ci(statistic: Callable, data: Sequence, n_boot: int = 5000,
                 rng=None) -> BootstrapResult:
    """Percentile 95% CI of a scalar statistic under resampling with
    replacement. The point estimate is the statistic on the full data."""
    if len(data) == 0:
        raise InputError("cannot bootstrap empty data")
    gen, seed = _as_rng(rng)
    data = list(data)
    n = len(data)
    estimate = float(statistic(data))
    replicates = np.empty(n_boot)
    for b in range(n_boot):
        picks = gen.integers(0, n, size=n)
        replicates[b] = statistic([data[i] for i in picks])
    low, high = np.percentile(replicates, [2.5, 97.5])
    return BootstrapResult(estimate, float(low), float(high), n_boot, seed)


def _split_indices(records, partition_unit, group_key, gen):
    n = len(records)
    if partition_unit == "trials":
        if n < 2:
            raise InputError("need at least two records to split")
        order = gen.permutation(n)
        half = n // 2
        return order[:half], order[half:]
    if partition_unit == "per-pair-ratings":
        groups: dict = {}
        for i, record in enumerate(records):
            groups.setdefault(group_key(record), []).append(i)
        first, second = [], []
        for key, members in sorted(groups.items()):
            if len(members) < 2:
                raise InputError(
                    f"group {key!r} has fewer than two ratings; cannot split")
            order = gen.permutation(len(members))
            half = len(members) // 2
            first.extend(members[k] for k in order[:half])
            second.extend(members[k] for k in order[half:])
        return np.array(first), np.array(second)
    if partition_unit == "sentences":
        keys = sorted({group_key(record) for record in records})
        if len(keys) < 2:
            raise InputError("need at least two sentences to split by sentence")
        order = gen.permutation(len(keys))
        half = len(keys) // 2
        side_a = {keys[k] for k in order[:half]}
        first = [i for i, r in enumerate(records) if group_key(r) in side_a]
        second = [i for i, r in enumerate(records) if group_key(r) not in side_a]
        return np.array(first), np.array(second)
    raise ConfigError(f"unknown partition unit: {partition_unit!r}")


def _default_group_key(record):
    if hasattr(record, "pair"):
        return record.pair()
    if hasattr(record, "sentence"):
        return (record.tone, record.sentence)
    if hasattr(record, "feature"):
        return (record.tone, record.feature)
    raise InputError("cannot infer a group key for this record; pass group_key=")


def _sentence_key(record):
    if hasattr(record, "sentence"):
        return record.sentence
    raise InputError("sentence partitioning needs records with a .sentence; "
                     "pass group_key=")


def split_half(records: Sequence, partition_unit: str, statistic: Callable,
               n_boot: int = 5000, rng=None,
               group_key: Optional[Callable] = None) -> BootstrapResult:
    """Split-half reliability: repeatedly bisect the data, apply `statistic`
    (a vector-valued summary) to each half, and correlate the two vectors.

    partition_unit picks the bisection scheme: "trials" splits raw records,
    "per-pair-ratings" splits each rating group in half (needs >= 2 ratings
    per group), "sentences" splits the sentence set so each half sees
    disjoint sentences. Reports the mean r and its percentile 95% CI.
    """
    if partition_unit not in PARTITION_UNITS:
        raise ConfigError(f"unknown partition unit: {partition_unit!r}")
    if n_boot < 1:
        raise ConfigError("n_boot must be positive")
    gen, seed = _as_rng(rng)
    records = list(records)
    if group_key is None:
        group_key = _sentence_key if partition_unit == "sentences" \
            else _default_group_key
    replicates = np.empty(n_boot)
    for b in range(n_boot):
        first, second = _split_indices(records, partition_unit, group_key, gen)
        v1 = np.asarray(statistic([records[i] for i in first]), dtype=float)
        v2 = np.asarray(statistic([records[i] for i in second]), dtype=float)
        replicates[b] = pearson(v1, v2)
    low, high = np.percentile(replicates, [2.5, 97.5])
    return BootstrapResult(float(replicates.mean()), float(low), float(high),
                           n_boot, seed)


# --------------------------------------------------------------------------
# multidimensional scaling


@dataclass
class MdsSolution:
    labels: tuple
    points: np.ndarray
    stress: float
    transform: str = "euclidean"

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        if self.points.shape[0] != len(self.labels):
            raise ConfigError("one point per label required")
        if self.stress < 0:
            raise ConfigError("stress must be nonnegative")

    def point(self, label) -> np.ndarray:
        try:
            return self.points[self.labels.index(label)]
        except ValueError:
            raise InputError(f"unknown label: {label!r}") from None

    def domain_points(self, domain: str) -> tuple[list, np.ndarray]:
        """Labels must be (tone, domain) pairs; returns that domain's slice."""
        picked = [(i, label[0]) for i, label in enumerate(self.labels)
                  if isinstance(label, tuple) and label[1] == domain]
        if not picked:
            raise InputError(f"no points for domain {domain!r}")
        idx = [i for i, _ in picked]
        return [t for _, t in picked], self.points[idx]


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InputError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T):
        raise InputError("dissimilarity matrix must be symmetric")
    if d.min() < 0:
        raise InputError("dissimilarities must be nonnegative")
    if not np.allclose(np.diag(d), 0.0):
        raise InputError("dissimilarity diagonal must be zero")
    return (d + d.T) / 2.0


def _torgerson(d: np.ndarray, dim: int) -> np.ndarray:
    n = d.shape[0]
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (d * d) @ j
    eigenvalues, eigenvectors = np.linalg.eigh(b)
    order = np.argsort(eigenvalues)[::-1][:dim]
    scale = np.sqrt(np.maximum(eigenvalues[order], 0.0))
    x = eigenvectors[:, order] * scale
    if x.shape[1] < dim:  # more axes than points: the extras are flat zero
        x = np.hstack([x, np.zeros((n, dim - x.shape[1]))])
    return x


def _pair_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _raw_stress(d: np.ndarray, dist: np.ndarray) -> float:
    resid = d - dist
    return float((resid * resid).sum() / 2.0)  # each pair once


def mds(dissimilarity, dim: int = 2, labels: Optional[Sequence] = None,
        max_iter: int = 500, tol: float = 1e-9,
        transform: str = "euclidean") -> MdsSolution:
    """Classical (Torgerson) embedding refined by SMACOF stress majorization.

    Stops when the relative raw-stress improvement drops below `tol` or after
    max_iter sweeps. The reported stress is the square root of raw stress
    over the total squared dissimilarity, zero for a perfect fit.
    """
    d = _check_dissimilarity(dissimilarity)
    n = d.shape[0]
    if dim < 1:
        raise ConfigError("embedding dimension must be at least 1")
    if labels is None:
        labels = tuple(range(n))
    labels = tuple(labels)
    if len(labels) != n:
        raise ConfigError("label count must match matrix size")
    if n == 1:
        return MdsSolution(labels, np.zeros((1, dim)), 0.0, transform)
    x = _torgerson(d, dim)
    dist = _pair_distances(x)
    stress = _raw_stress(d, dist)
    for _ in range(max_iter):
        if stress == 0.0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, d / dist, 0.0)
        np.fill_diagonal(ratio, 0.0)
        b = -ratio
        np.fill_diagonal(b, ratio.sum(axis=1))
        x_next = (b @ x) / n
        dist = _pair_distances(x_next)
        next_stress = _raw_stress(d, dist)
        done = stress > 0 and (stress - next_stress) / stress < tol
        x, stress = x_next, next_stress
        if done:
            break
    x = x - x.mean(axis=0)
    # deterministic orientation: strongest coordinate on each axis points up
    for axis in range(x.shape[1]):
        anchor = np.argmax(np.abs(x[:, axis]))
        if x[anchor, axis] < 0:
            x[:, axis] = -x[:, axis]
    total = float((d * d).sum() / 2.0)
    normalized = float(np.sqrt(_raw_stress(d, _pair_distances(x)) / total)) \
        if total > 0 else 0.0
    return MdsSolution(labels, x, normalized, transform)


def corr_to_dissimilarity(corr: CorrelationMatrix) -> np.ndarray:
    """d = 1 - r with a hard zero diagonal, the input MDS expects."""
    values = corr.values
    if np.nanmin(values) < -1 - 1e-12 or np.nanmax(values) > 1 + 1e-12:
        raise InputError("correlations must lie in [-1, 1]")
    d = 1.0 - values
    np.fill_diagonal(d, 0.0)
    return d


def shared_space(rm_a: RatingMatrix, rm_b: RatingMatrix, dim: int = 2) -> MdsSolution:
    """The full pipeline step: combined correlation -> 1-r -> MDS."""
    combined = combined_matrix(rm_a, rm_b)
    return mds(corr_to_dissimilarity(combined), dim=dim,
               labels=combined.row_labels, transform="1-r")


# --------------------------------------------------------------------------
# feature arrows and projections


@dataclass(frozen=True)
class FeatureArrow:
    feature: str
    domain: str
    direction: np.ndarray
    explained_variance: float

    def __post_init__(self) -> None:
        direction = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", direction)
        if not np.all(np.isfinite(direction)):
            raise ConfigError("arrow direction must be finite")
        if self.explained_variance < 0:
            raise ConfigError("explained variance must be nonnegative")


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise InputError("cosine is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def explained_variance(solution: MdsSolution, arrow, domain: str) -> float:
    """Share of the domain cloud's variance captured along the arrow."""
    arrow = np.asarray(arrow, dtype=float)
    if np.linalg.norm(arrow) == 0:
        raise InputError("explained variance is undefined for a zero arrow")
    _, points = solution.domain_points(domain)
    unit = arrow / np.linalg.norm(arrow)
    centered = points - points.mean(axis=0)
    along = centered @ unit
    total = float((centered * centered).sum())
    if total == 0:
        return 0.0
    return float((along * along).sum() / total)


def biplot_arrows(solution: MdsSolution, features: FeatureRatingMatrix,
                  domain: str) -> list[FeatureArrow]:
    """Regress each embedding axis on the standardized feature columns of
    one domain's tones; a feature's coefficients across axes form its arrow."""
    tones, points = solution.domain_points(domain)
    missing = [t for t in tones if t not in features.tones]
    if missing:
        raise InputError(f"feature ratings missing for tones {missing!r}")
    rows = [features.tones.index(t) for t in tones]
    raw = features.means[rows, :]
    std = raw.std(axis=0)
    if np.any(std == 0):
        j = int(np.where(std == 0)[0][0])
        raise InputError(
            f"feature {features.features[j]!r} is constant over {domain!r} tones")
    z = (raw - raw.mean(axis=0)) / std
    design = np.hstack([np.ones((len(tones), 1)), z])
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise InputError("feature columns are collinear; arrows are not identifiable")
    coef, *_ = np.linalg.lstsq(design, points, rcond=None)
    arrows = []
    for j, feature in enumerate(features.features):
        direction = coef[1 + j, :]
        arrows.append(FeatureArrow(
            feature, domain, direction,
            explained_variance(solution, direction, domain)))
    return arrows


def same_tone_distances(solution: MdsSolution) -> list[tuple[str, float]]:
    """Distance between each tone's two domain points, largest first."""
    domains = sorted({label[1] for label in solution.labels
                      if isinstance(label, tuple)})
    if len(domains) != 2:
        raise InputError(f"expected exactly two domains, found {domains!r}")
    tones_a, points_a = solution.domain_points(domains[0])
    tones_b, points_b = solution.domain_points(domains[1])
    index_b = {t: i for i, t in enumerate(tones_b)}
    out = []
    for i, tone in enumerate(tones_a):
        if tone not in index_b:
            raise InputError(f"tone {tone!r} has no counterpart in {domains[1]!r}")
        delta = points_a[i] - points_b[index_b[tone]]
        out.append((tone, float(np.linalg.norm(delta))))
    missing = [t for t in tones_b if t not in set(tones_a)]
    if missing:
        raise InputError(f"tone {missing[0]!r} has no counterpart in {domains[0]!r}")
    out.sort(key=lambda pair: (-pair[1], pair[0]))
    return out


# --------------------------------------------------------------------------
# nearest-neighbor matching


@dataclass
class NnMatchGraph:
    """Directed nearest-neighbor edges between two domains with bootstrap
    support. Each source tone has exactly one edge per direction."""

    a_to_b: dict[str, tuple[str, float]]
    b_to_a: dict[str, tuple[str, float]]
    n_boot: int

    def edge(self, source: str, direction: str = "a_to_b") -> tuple[str, float]:
        table = self.a_to_b if direction == "a_to_b" else self.b_to_a
        if source not in table:
            raise InputError(f"no edge for {source!r} in {direction}")
        return table[source]


def _argmax_with_ties(values: np.ndarray, labels: Sequence[str]) -> Optional[str]:
    """Index of the largest finite value; ties go to the smaller label."""
    finite = np.isfinite(values)
    if not finite.any():
        return None
    best = np.nanmax(np.where(finite, values, -np.inf))
    winners = [labels[i] for i in range(len(labels))
               if finite[i] and values[i] == best]
    return min(winners)


def nn_edges(cross: CorrelationMatrix) -> tuple[dict[str, str], dict[str, str]]:
    """Argmax target per row tone and per column tone of a cross matrix."""
    forward = {}
    for i, row in enumerate(cross.row_labels):
        target = _argmax_with_ties(cross.values[i, :], cross.col_labels)
        if target is None:
            raise InputError(f"degenerate row for {row!r}: no finite correlations")
        forward[row] = target
    backward = {}
    for j, col in enumerate(cross.col_labels):
        target = _argmax_with_ties(cross.values[:, j], cross.row_labels)
        if target is None:
            raise InputError(f"degenerate column for {col!r}: no finite correlations")
        backward[col] = target
    return forward, backward


def _safe_cross_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-by-row correlations where degenerate rows yield NaN, not errors;
    bootstrap replicates are allowed to produce flat rows."""
    ca = a - a.mean(axis=1, keepdims=True)
    cb = b - b.mean(axis=1, keepdims=True)
    na = np.linalg.norm(ca, axis=1, keepdims=True)
    nb = np.linalg.norm(cb, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (ca / np.where(na == 0, np.nan, na)) @ \
            (cb / np.where(nb == 0, np.nan, nb)).T
    return values


def nn_matching(rm_a: RatingMatrix, rm_b: RatingMatrix, n_boot: int = 5000,
                rng=None) -> NnMatchGraph:
    """Nearest neighbors across domains with sentence-resampling support.

    The point edges come from the full cross-correlation matrix. Each
    bootstrap replicate resamples the shared sentence list with replacement,
    recomputes the cross correlations, and votes on each source's argmax;
    an edge's frequency is the share of valid votes that agree with it.
    """
    cross = cross_correlation(rm_a, rm_b)
    forward, backward = nn_edges(cross)
    gen, _ = _as_rng(rng)
    n_sentences = len(rm_a.sentences)
    agree_f = Counter()
    votes_f = Counter()
    agree_b = Counter()
    votes_b = Counter()
    for _ in range(n_boot):
        picks = gen.integers(0, n_sentences, size=n_sentences)
        values = _safe_cross_values(rm_a.means[:, picks], rm_b.means[:, picks])
        for i, row in enumerate(cross.row_labels):
            target = _argmax_with_ties(values[i, :], cross.col_labels)
            if target is None:
                continue
            votes_f[row] += 1
            if target == forward[row]:
                agree_f[row] += 1
        for j, col in enumerate(cross.col_labels):
            target = _argmax_with_ties(values[:, j], cross.row_labels)
            if target is None:
                continue
            votes_b[col] += 1
            if target == backward[col]:
                agree_b[col] += 1

    def table(edges, agree, votes):
        if n_boot == 0:
            return {source: (target, 1.0) for source, target in edges.items()}
        return {
            source: (target,
                     agree[source] / votes[source] if votes[source] else 0.0)
            for source, target in edges.items()
        }

    return NnMatchGraph(table(forward, agree_f, votes_f),
                        table(backward, agree_b, votes_b), n_boot)


# --------------------------------------------------------------------------
# TF-IDF over domain sentence sets


def tfidf(domain_sentences: dict[str, Sequence[str]]) -> dict[str, dict[str, float]]:
    """Each domain's sentences form one document; scores are raw term counts
    times smoothed idf, ln((1+N)/(1+df)) + 1."""
    n_docs = len(domain_sentences)
    term_counts = {
        domain: Counter(token for sentence in sentences
                        for token in tokens(sentence))
        for domain, sentences in domain_sentences.items()
    }
    df = Counter()
    for counts in term_counts.values():
        df.update(counts.keys())
    out: dict[str, dict[str, float]] = {}
    for domain, counts in term_counts.items():
        idf = {term: float(np.log((1 + n_docs) / (1 + df[term])) + 1.0)
               for term in counts}
        out[domain] = {term: counts[term] * idf[term] for term in counts}
    return out


# --------------------------------------------------------------------------
# exact stationary distribution of the synthetic Gibbs chain


def _strongly_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]

    def reach(mat) -> set[int]:
        seen = {0}
        frontier = [0]
        while frontier:
            node = frontier.pop()
            for nxt in np.where(mat[node] > 0)[0]:
                if nxt not in seen:
                    seen.add(int(nxt))
                    frontier.append(int(nxt))
        return seen

    return len(reach(adjacency)) == n and len(reach(adjacency.T)) == n


def gibbs_stationary_exact(joint: SyntheticJoint, tol: float = 1e-12,
                           max_iter: int = 200000) -> tuple[np.ndarray, np.ndarray]:
    """Stationary (tone, sentence) marginals of the alternating chain.

    Builds the tone-to-tone kernel K(t'|t) = sum_s p(s|t) p(t'|s), power
    iterates it to the requested residual, and maps the result through
    p(s|t) for the sentence side. For any well-posed joint these equal the
    joint's own marginals, which is exactly the claim tests lean on.
    """
    probs = joint.probs
    p_s_given_t = probs / probs.sum(axis=1, keepdims=True)
    p_t_given_s = probs / probs.sum(axis=0, keepdims=True)
    kernel = p_s_given_t @ p_t_given_s.T
    if not _strongly_connected(kernel):
        raise InputError("joint induces a reducible chain; no unique stationary law")
    pi = np.full(kernel.shape[0], 1.0 / kernel.shape[0])
    for _ in range(max_iter):
        nxt = pi @ kernel
        nxt = nxt / nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise InputError(f"power iteration did not reach residual {tol}")
    sentence_marginal = pi @ p_s_given_t
    return pi, sentence_marginal
