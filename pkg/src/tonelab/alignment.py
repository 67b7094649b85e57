"""Unsupervised cross-domain alignment of tone embeddings: orthogonal
Procrustes, entropic Gromov-Wasserstein transport, and EM-style lexicon
induction, scored against a ground-truth cross-correlation matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .core import ConfigError, InputError, ToneLabError, canonical_json
from .ratings import RatingMatrix

METHODS = ("procrustes", "gwot", "bli")

# Appendix-style regularization strength kept available for comparison runs;
# the shipped default below resolves much sharper couplings at this scale.
GWOT_PAPER_PRESET_EPSILON = 0.5


@dataclass
class EmbeddingSet:
    """One domain's tone embeddings: a row of mean ratings per tone."""

    labels: tuple[str, ...]
    vectors: np.ndarray
    domain: str = ""

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.labels):
            raise ConfigError("need one embedding row per label")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("duplicate tone labels in embedding set")
        spans = self.vectors.max(axis=1) - self.vectors.min(axis=1)
        flat = np.where(spans == 0)[0]
        if flat.size:
            raise InputError(
                f"embedding row for {self.labels[flat[0]]!r} is constant")

    @classmethod
    def from_rating_matrix(cls, rm: RatingMatrix) -> "EmbeddingSet":
        return cls(rm.tones, rm.means.copy(), rm.domain)

    def relabeled(self, mapping: dict[str, str]) -> "EmbeddingSet":
        return EmbeddingSet(tuple(mapping.get(t, t) for t in self.labels),
                            self.vectors.copy(), self.domain)


@dataclass
class AlignmentResult:
    method: str
    map: Optional[np.ndarray] = None
    coupling: Optional[np.ndarray] = None
    matching: Optional[tuple[int, ...]] = None
    seed: int = 0
    hyperparameters: dict = field(default_factory=dict)
    objective: Optional[float] = None
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown alignment method: {self.method!r}")
        if self.method == "gwot":
            if self.coupling is None:
                raise ConfigError("transport result needs a coupling")
            t = np.asarray(self.coupling, dtype=float)
            rows, cols = t.shape
            if np.abs(t.sum(axis=1) - 1.0 / rows).max() > 1e-6 \
                    or np.abs(t.sum(axis=0) - 1.0 / cols).max() > 1e-6:
                raise ConfigError("coupling violates its uniform marginals")
            self.coupling = t
        else:
            if self.map is None:
                raise ConfigError(f"{self.method} result needs an orthogonal map")
            q = np.asarray(self.map, dtype=float)
            gram = q.T @ q
            if np.linalg.norm(gram - np.eye(q.shape[1])) > 1e-8:
                raise ConfigError("map is not orthogonal")
            self.map = q


def _center(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return matrix - matrix.mean(axis=0)


def _as_vectors(x) -> np.ndarray:
    return x.vectors if isinstance(x, EmbeddingSet) else np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# orthogonal Procrustes


def procrustes(x, y) -> np.ndarray:
    """The orthogonal map closest to carrying x onto y, by SVD of the
    centered cross-product. Both inputs are column-centered internally."""
    x = _as_vectors(x)
    y = _as_vectors(y)
    if x.shape != y.shape:
        raise InputError(f"shape mismatch: {x.shape} vs {y.shape}")
    xc = _center(x)
    yc = _center(y)
    try:
        u, _, vt = np.linalg.svd(xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise ToneLabError(f"svd failed during alignment: {exc}") from exc
    return u @ vt


def _orthogonal_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Procrustes core without re-centering, for already-prepared rows."""
    u, _, vt = np.linalg.svd(a.T @ b)
    return u @ vt


# --------------------------------------------------------------------------
# entropic Gromov-Wasserstein


@dataclass(frozen=True)
class GwotParams:
    # epsilon is relative to median-scaled costs; 0.01 keeps couplings sharp
    # for mid-dimensional clouds where entropic blur otherwise flattens them
    epsilon: float = 0.01
    max_outer: int = 200
    inner_sinkhorn_iters: int = 500
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.max_outer < 1 or self.inner_sinkhorn_iters < 1:
            raise ConfigError("iteration budgets must be positive")
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")


def _squared_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return (diff * diff).sum(axis=2)


def _round_to_polytope(t: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project an almost-feasible plan onto exact marginals: scale rows and
    columns down where they overshoot, then spread the leftover deficit as a
    rank-one correction. Keeps entries nonnegative."""
    row = t.sum(axis=1)
    t = t * np.minimum(a / np.where(row == 0, 1.0, row), 1.0)[:, None]
    col = t.sum(axis=0)
    t = t * np.minimum(b / np.where(col == 0, 1.0, col), 1.0)[None, :]
    err_a = a - t.sum(axis=1)
    err_b = b - t.sum(axis=0)
    total = err_a.sum()
    if total > 0:
        t = t + np.outer(err_a, err_b) / total
    return t


def _sinkhorn_log(cost: np.ndarray, a: np.ndarray, b: np.ndarray,
                  epsilon: float, max_iters: int) -> np.ndarray:
    """Entropic projection onto the transport polytope, in log space so
    large cost ranges cannot underflow the kernel. The result is rounded to
    satisfy both marginals exactly even when the inner loop stops early."""
    kmat = -cost / epsilon
    log_a = np.log(a)
    log_b = np.log(b)
    u = np.zeros(len(a))
    v = np.zeros(len(b))
    for i in range(max_iters):
        u = log_a - logsumexp(kmat + v[None, :], axis=1)
        v = log_b - logsumexp(kmat + u[:, None], axis=0)
        if i % 10 == 9:
            t = np.exp(kmat + u[:, None] + v[None, :])
            if np.abs(t.sum(axis=1) - a).max() < 1e-13:
                break
    return _round_to_polytope(np.exp(kmat + u[:, None] + v[None, :]), a, b)


def gwot(x, y, params: GwotParams = GwotParams()) -> AlignmentResult:
    """Entropic Gromov-Wasserstein coupling of two point clouds via their
    intra-domain squared-Euclidean cost matrices, uniform marginals.

    Each sweep takes the objective gradient, projects it entropically with
    Sinkhorn scaling, then moves along the segment toward the projection by
    the exact minimizer of the (quadratic) objective, so the objective can
    never increase. Costs are scaled by their pooled median first, which
    makes epsilon meaningful across inputs of any magnitude.
    """
    x = _center(_as_vectors(x))
    y = _center(_as_vectors(y))
    m_x, m_y = x.shape[0], y.shape[0]
    if m_x < 2 or m_y < 2:
        raise InputError("transport needs at least two points per side")
    cx = _squared_distances(x)
    cy = _squared_distances(y)
    pooled = np.concatenate([cx[cx > 0].ravel(), cy[cy > 0].ravel()])
    scale = float(np.median(pooled)) if pooled.size else 1.0
    cx = cx / scale
    cy = cy / scale
    a = np.full(m_x, 1.0 / m_x)
    b = np.full(m_y, 1.0 / m_y)
    ones_x = np.ones(m_x)
    ones_y = np.ones(m_y)
    # quadratic loss split: (u - v)^2 = u^2 + v^2 - 2uv
    const_c = np.outer((cx * cx) @ a, ones_y) + np.outer(ones_x, (cy * cy) @ b)
    h1 = cx
    h2 = 2.0 * cy

    def grad(t: np.ndarray) -> np.ndarray:
        return const_c - h1 @ t @ h2.T

    def objective(t: np.ndarray) -> float:
        return float((grad(t) * t).sum())

    coupling = np.outer(a, b)
    history = [objective(coupling)]
    change = np.inf
    converged = False
    for _ in range(params.max_outer):
        target = _sinkhorn_log(grad(coupling), a, b, params.epsilon,
                               params.inner_sinkhorn_iters)
        delta = target - coupling
        quad = -float((h1 @ delta @ h2.T * delta).sum())
        lin = float((const_c * delta).sum()) \
            - 2.0 * float((h1 @ coupling @ h2.T * delta).sum())
        if quad > 0:
            gamma = float(np.clip(-lin / (2.0 * quad), 0.0, 1.0))
        else:
            gamma = 1.0 if quad + lin < 0 else 0.0
        coupling = coupling + gamma * delta
        history.append(objective(coupling))
        change = float(np.abs(gamma * delta).sum())
        if change < params.tol:
            converged = True
            break
    if not converged:
        raise ToneLabError(
            f"transport did not converge: coupling change {change:.3e} "
            f"after {params.max_outer} sweeps")
    return AlignmentResult(
        "gwot", coupling=coupling, seed=params.seed,
        hyperparameters={
            "epsilon": params.epsilon,
            "max_outer": params.max_outer,
            "inner_sinkhorn_iters": params.inner_sinkhorn_iters,
            "tol": params.tol,
            "cost_scale": scale,
            "objective_history": tuple(history),
        },
        objective=history[-1])


# --------------------------------------------------------------------------
# lexicon-induction style matching


@dataclass(frozen=True)
class BliParams:
    k_neighbors: int = 5
    direction: str = "backward"
    max_em_iters: int = 50
    restarts: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be at least 1")
        if self.direction not in ("backward", "forward"):
            raise ConfigError(f"unknown direction: {self.direction!r}")
        if self.max_em_iters < 1 or self.restarts < 1:
            raise ConfigError("iteration budgets must be positive")


def _normalized_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    flat = np.where(norms.ravel() == 0)[0]
    if flat.size:
        raise InputError(f"degenerate {what} row at index {flat[0]} "
                         "(zero after centering)")
    return matrix / norms


def _neighbor_mask(scores: np.ndarray, k: int, direction: str) -> np.ndarray:
    m = scores.shape[0]
    if k >= m:
        return np.ones_like(scores, dtype=bool)
    mask = np.zeros_like(scores, dtype=bool)
    if direction == "backward":
        for j in range(m):
            top = np.argpartition(-scores[:, j], k - 1)[:k]
            mask[top, j] = True
    else:
        for i in range(m):
            top = np.argpartition(-scores[i, :], k - 1)[:k]
            mask[i, top] = True
    return mask


def _spectrum_scores(x_hat: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Similarity-of-similarity: correlate each row's sorted intra-domain
    cosine profile across domains. Correspondence-free, so it makes a
    usable starting matching."""
    def spectra(z):
        sims = z @ z.T
        m = z.shape[0]
        off = np.array([np.delete(sims[i], i) for i in range(m)])
        return -np.sort(-off, axis=1)

    sx = spectra(x_hat)
    sy = spectra(y_hat)
    sx = sx - sx.mean(axis=1, keepdims=True)
    sy = sy - sy.mean(axis=1, keepdims=True)
    nx = np.linalg.norm(sx, axis=1, keepdims=True)
    ny = np.linalg.norm(sy, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = (sx / np.where(nx == 0, np.nan, nx)) @ \
            (sy / np.where(ny == 0, np.nan, ny)).T
    return np.nan_to_num(scores, nan=0.0)


def bli(x, y, params: BliParams = BliParams()) -> AlignmentResult:
    """Hard-EM over a latent one-to-one matching and an orthogonal map.

    E-step: Hungarian assignment maximizing total mapped cosine, restricted
    to each item's k most similar candidates (computed per target column for
    the backward direction) plus the incumbent matching, which keeps the
    objective monotone. M-step: refit the map on matched unit rows, which is
    exactly the total-cosine maximizer. Starts from a similarity-spectrum
    matching, a norm-ranked matching, then seeded random permutations; the
    best final objective wins.
    """
    x = _center(_as_vectors(x))
    y = _center(_as_vectors(y))
    if x.shape != y.shape:
        raise InputError(f"shape mismatch: {x.shape} vs {y.shape}")
    m = x.shape[0]
    x_hat = _normalized_rows(x, "source")
    y_hat = _normalized_rows(y, "target")

    inits: list[np.ndarray] = []
    if m >= 3:
        _, cols = linear_sum_assignment(_spectrum_scores(x_hat, y_hat),
                                        maximize=True)
        inits.append(cols)
    order_x = np.argsort(np.linalg.norm(x, axis=1))
    order_y = np.argsort(np.linalg.norm(y, axis=1))
    by_norm = np.empty(m, dtype=int)
    by_norm[order_x] = order_y
    inits.append(by_norm)
    rng = np.random.default_rng(params.seed)
    while len(inits) < params.restarts:
        inits.append(rng.permutation(m))
    inits = inits[:max(params.restarts, 1)]

    best = None
    for matching in inits:
        matching = np.asarray(matching)
        q = _orthogonal_map(x_hat, y_hat[matching])
        history = []
        fallback = False
        for _ in range(params.max_em_iters):
            scores = x_hat @ q @ y_hat.T
            mask = _neighbor_mask(scores, params.k_neighbors, params.direction)
            mask[np.arange(m), matching] = True  # incumbent stays feasible
            bounded = np.where(mask, scores, -1e9)
            rows, cols = linear_sum_assignment(bounded, maximize=True)
            if bounded[rows, cols].min() <= -1e8:
                fallback = True
                rows, cols = linear_sum_assignment(scores, maximize=True)
            objective = float(scores[rows, cols].sum())
            history.append(objective)
            if np.array_equal(cols, matching):
                break
            matching = cols
            q = _orthogonal_map(x_hat, y_hat[matching])
        candidate = (history[-1], matching, q, history, fallback)
        if best is None or candidate[0] > best[0]:
            best = candidate

    objective, matching, q, history, fallback = best
    return AlignmentResult(
        "bli", map=q, matching=tuple(int(j) for j in matching),
        seed=params.seed,
        hyperparameters={
            "k_neighbors": params.k_neighbors,
            "direction": params.direction,
            "max_em_iters": params.max_em_iters,
            "restarts": params.restarts,
            "objective_history": tuple(history),
        },
        objective=objective,
        notes=("fallback-unrestricted",) if fallback else ())


# --------------------------------------------------------------------------
# prediction and evaluation


def _row_correlations(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    ca = a - a.mean(axis=1, keepdims=True)
    cb = b - b.mean(axis=1, keepdims=True)
    na = np.linalg.norm(ca, axis=1, keepdims=True)
    nb = np.linalg.norm(cb, axis=1, keepdims=True)
    if (na == 0).any() or (nb == 0).any():
        raise InputError(f"degenerate row while correlating {what}")
    return np.clip((ca / na) @ (cb / nb).T, -1.0, 1.0)


def predict_cross_similarity(result: AlignmentResult, x, y) -> np.ndarray:
    """Predicted cross-domain similarity: map the source into the target's
    coordinates using the method's output, then correlate all row pairs."""
    x = _center(_as_vectors(x))
    y = _center(_as_vectors(y))
    if result.method == "gwot":
        t = result.coupling
        if t.shape != (x.shape[0], y.shape[0]):
            raise InputError(
                f"coupling shape {t.shape} does not fit {x.shape[0]} x {y.shape[0]} inputs")
        mapped = (t @ y) / t.sum(axis=1, keepdims=True)
    else:
        q = result.map
        if x.shape[1] != q.shape[0]:
            raise InputError(
                f"map of size {q.shape} does not fit embeddings with {x.shape[1]} columns")
        if y.shape[1] != q.shape[1]:
            raise InputError("target embeddings do not match the mapped space")
        mapped = x @ q
    return _row_correlations(mapped, y, "predicted similarity")


def eval_similarity_recovery(predicted, ground_truth_cc) -> float:
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(ground_truth_cc, dtype=float)
    if predicted.shape != truth.shape:
        raise InputError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    p = predicted.ravel()
    t = truth.ravel()
    pc = p - p.mean()
    tc = t - t.mean()
    denom = np.sqrt((pc * pc).sum() * (tc * tc).sum())
    if denom == 0:
        raise InputError("degenerate matrix while scoring recovery")
    return float(np.clip((pc * tc).sum() / denom, -1.0, 1.0))


def eval_domain_preservation(intra_before, intra_after) -> float:
    """Correlation of the strict upper triangles of two square intra
    matrices; 1.0 means the mapping left internal structure untouched."""
    before = np.asarray(intra_before, dtype=float)
    after = np.asarray(intra_after, dtype=float)
    if before.shape != after.shape or before.ndim != 2 \
            or before.shape[0] != before.shape[1]:
        raise InputError("need two square matrices of the same size")
    iu = np.triu_indices(before.shape[0], k=1)
    return eval_similarity_recovery(before[iu].reshape(1, -1),
                                    after[iu].reshape(1, -1))


def intra_similarity(vectors: np.ndarray) -> np.ndarray:
    """Row-cosine similarity on column-centered vectors. Cosine (rather
    than per-row correlation) is what any orthogonal map preserves exactly,
    which makes the preservation metric's isometry property sharp."""
    v = _center(vectors)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if (norms == 0).any():
        raise InputError("degenerate row while building intra similarity")
    unit = v / norms
    return np.clip(unit @ unit.T, -1.0, 1.0)


def domain_preservation(result: AlignmentResult, x, y) -> tuple[float, float]:
    """How much each domain's internal correlation structure survives in
    the shared space. The target side stays fixed, so its score is 1."""
    x = _center(_as_vectors(x))
    y = _center(_as_vectors(y))
    if result.method == "gwot":
        mapped = (result.coupling @ y) / result.coupling.sum(axis=1, keepdims=True)
    else:
        mapped = x @ result.map
    r_x = eval_domain_preservation(intra_similarity(x), intra_similarity(mapped))
    r_y = eval_domain_preservation(intra_similarity(y), intra_similarity(y))
    return r_x, r_y


def eval_knn_matching(predicted, ground_truth_cc, k: int) -> float:
    """Mean per-tone overlap between the k nearest targets under the
    prediction and under the ground truth, as a share of k."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(ground_truth_cc, dtype=float)
    if predicted.shape != truth.shape:
        raise InputError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    m = predicted.shape[1]
    if k < 1:
        raise ConfigError("k must be at least 1")
    if k >= m:
        raise ConfigError(f"k={k} needs more than {m} candidate targets")
    overlaps = []
    for i in range(predicted.shape[0]):
        top_pred = set(np.argsort(-predicted[i], kind="stable")[:k])
        top_truth = set(np.argsort(-truth[i], kind="stable")[:k])
        overlaps.append(len(top_pred & top_truth) / k)
    return float(np.mean(overlaps))


# --------------------------------------------------------------------------
# benchmark harness


KNN_FORMULA = "mean over source tones of |top-k(predicted) ∩ top-k(truth)| / k"


@dataclass
class BenchmarkReport:
    rows: dict[str, dict[str, tuple[float, float, float]]]
    failed: tuple[dict, ...]
    seeds: int
    metadata: dict

    def __post_init__(self) -> None:
        for method, metrics in self.rows.items():
            for name, (mean, lo, hi) in metrics.items():
                if not (lo <= hi):
                    raise ConfigError(f"inverted CI for {method}/{name}")
                if name.startswith("knn") and not (-1e-9 <= mean <= 1 + 1e-9):
                    raise ConfigError(f"rate out of range for {method}/{name}")
                if not name.startswith("knn") and not (-1 - 1e-9 <= mean <= 1 + 1e-9):
                    raise ConfigError(f"correlation out of range for {method}/{name}")

    def mean(self, method: str, metric: str) -> float:
        return self.rows[method][metric][0]


def _random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def _metrics_for(predicted: np.ndarray, truth: np.ndarray,
                 preservation: tuple[float, float],
                 domains: tuple[str, str]) -> dict[str, float]:
    m = truth.shape[1]
    out = {
        "similarity_recovery": eval_similarity_recovery(predicted, truth),
        f"preservation_{domains[0]}": preservation[0],
        f"preservation_{domains[1]}": preservation[1],
    }
    for k in range(1, min(5, m - 1) + 1):
        out[f"knn_rate_k{k}"] = eval_knn_matching(predicted, truth, k)
    return out


def _aggregate(samples: list[dict[str, float]]) -> dict[str, tuple[float, float, float]]:
    keys = samples[0].keys()
    out = {}
    for key in keys:
        values = np.array([s[key] for s in samples])
        lo, hi = np.percentile(values, [2.5, 97.5])
        out[key] = (float(values.mean()), float(lo), float(hi))
    return out


def run_benchmark(x: EmbeddingSet, y: EmbeddingSet, ground_truth_cc,
                  seeds: int = 100,
                  gwot_params: GwotParams = GwotParams(),
                  bli_params: BliParams = BliParams()) -> BenchmarkReport:
    """Score every method against the ground-truth cross matrix.

    Procrustes and the entropic transport solver are deterministic, so they
    run once; the lexicon-induction method and the random-map baseline run
    once per seed and report percentile CIs. Per-seed failures are recorded
    rather than aborting the run.
    """
    truth = np.asarray(ground_truth_cc, dtype=float)
    xv = x.vectors
    yv = y.vectors
    domains = (x.domain or "x", y.domain or "y")
    if domains[0] == domains[1]:
        domains = (f"{domains[0]}-a", f"{domains[1]}-b")
    rows: dict[str, dict[str, tuple[float, float, float]]] = {}
    failed: list[dict] = []

    def score(result: AlignmentResult) -> dict[str, float]:
        predicted = predict_cross_similarity(result, xv, yv)
        return _metrics_for(predicted, truth,
                            domain_preservation(result, xv, yv), domains)

    def collect(method: str, runs) -> None:
        samples = []
        for seed, build in runs:
            try:
                samples.append(score(build()))
            except ToneLabError as exc:
                failed.append({"method": method, "seed": seed,
                               "error": str(exc)})
        if samples:
            rows[method] = _aggregate(samples)

    collect("procrustes", [(0, lambda: AlignmentResult(
        "procrustes", map=procrustes(xv, yv),
        hyperparameters={"correspondence": "identity"}))])
    collect("gwot", [(gwot_params.seed,
                      lambda: gwot(xv, yv, gwot_params))])
    collect("bli", [(s, lambda s=s: bli(xv, yv, replace(bli_params, seed=s)))
                    for s in range(seeds)])

    random_samples = []
    xc = _center(xv)
    yc = _center(yv)
    for s in range(seeds):
        rng = np.random.default_rng(s)
        q = _random_orthogonal(xc.shape[1], rng)
        predicted = _row_correlations(xc @ q, yc, "random baseline")
        r_x = eval_domain_preservation(intra_similarity(xc),
                                       intra_similarity(xc @ q))
        random_samples.append(_metrics_for(predicted, truth, (r_x, 1.0), domains))
    rows["random"] = _aggregate(random_samples)

    metadata = {
        "knn_formula": KNN_FORMULA,
        "procrustes_correspondence": "identity (shared tone list)",
        "deterministic_methods": ["procrustes", "gwot"],
        "gwot": {"epsilon": gwot_params.epsilon,
                 "max_outer": gwot_params.max_outer,
                 "inner_sinkhorn_iters": gwot_params.inner_sinkhorn_iters,
                 "tol": gwot_params.tol},
        "bli": {"k_neighbors": bli_params.k_neighbors,
                "direction": bli_params.direction,
                "max_em_iters": bli_params.max_em_iters,
                "restarts": bli_params.restarts},
        "domains": list(domains),
    }
    return BenchmarkReport(rows, tuple(failed), seeds, metadata)


def rotated_permuted_fixture(seed: int = 0, m: int = 40, n: int = 8,
                             sigma: float = 0.05,
                             displaced: Optional[int] = None
                             ) -> tuple[EmbeddingSet, EmbeddingSet, np.ndarray]:
    """Synthetic benchmark triple: two domains plus ground-truth cross matrix.

    The second domain is the first pushed through a random rotation with a
    random third of its rows cycled and Gaussian noise added. The true
    correspondence is therefore a non-identity permutation: a method stuck
    with the identity matching fits a third of its pairs wrong, one that
    infers the matching can recover everything, and a random map recovers
    nothing. Ground truth is what a perfect aligner would predict, row
    correlations after mapping the first domain through the planted rotation.
    """
    if m < 3 or n < 2:
        raise ConfigError("fixture needs at least 3 points and 2 dimensions")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, n))
    qstar = _random_orthogonal(n, rng)
    k = displaced if displaced is not None else max(2, m // 3)
    if not 2 <= k <= m:
        raise ConfigError(f"displaced count {k} out of range for {m} points")
    perm = np.arange(m)
    moved = rng.choice(m, size=k, replace=False)
    perm[moved] = np.roll(moved, 1)
    y = (x @ qstar)[perm] + rng.normal(0.0, sigma, size=(m, n))
    truth = _row_correlations(_center(x) @ qstar, _center(y), "fixture truth")
    labels = tuple(f"tone-{i:03d}" for i in range(m))
    return (EmbeddingSet(labels, x, domain="human"),
            EmbeddingSet(labels, y, domain="llm"),
            truth)


def benchmark_to_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "metric", "mean", "ci_low", "ci_high"])
        for method in sorted(report.rows):
            for metric in sorted(report.rows[method]):
                mean, lo, hi = report.rows[method][metric]
                writer.writerow([method, metric, repr(float(mean)),
                                 repr(float(lo)), repr(float(hi))])


def benchmark_to_json(report: BenchmarkReport, path) -> None:
    doc = {
        "seeds": report.seeds,
        "metadata": report.metadata,
        "failed": list(report.failed),
        "rows": {method: {metric: list(value)
                          for metric, value in metrics.items()}
                 for method, metrics in report.rows.items()},
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(canonical_json(doc) + "\n")
