"""Acceptance checklist: one test per headline property, at full scale.

Each test pins the tolerance and the wall-clock budget it must meet, so a
verbose run of this module reads as the go/no-go table for the package.
Unit-level edge cases live in the per-module test files; this one only
answers "does the assembled machinery deliver the numbers".
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from tonelab.agents import (SyntheticChainAgent, SyntheticJoint,
                            default_sentence_pool)
from tonelab.alignment import (BliParams, EmbeddingSet, _random_orthogonal,
                               bli, gwot, procrustes,
                               rotated_permuted_fixture, run_benchmark)
from tonelab.analysis import (MdsSolution, _pair_distances, bootstrap_ci,
                              entropy_bits, explained_variance,
                              gibbs_stationary_exact, intra_correlation,
                              mds, pearson, tone_histogram)
from tonelab.analysis import cross_correlation
from tonelab.chains import ExperimentConfig, create_experiment, run_autonomous
from tonelab.core import Tone
from tonelab.ingest import load_dataset, load_float_grid
from tonelab.ratings import aggregate_matrix
from tonelab.validation import (FilterConfig, default_lexicons,
                                default_seed_tones, validate_sentence,
                                validate_tone)

DATASET_ENV = "TONELAB_DATASET"


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def test_chain_engine_reaches_exact_stationary_tone_marginal():
    """200 chains x 200 iterations over a random 5x8 joint: the tone
    marginal over the back half of every chain matches the power-iterated
    stationary law, and that law is verified against the kernel directly."""
    start = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(7))
    joint = SyntheticJoint.random(default_seed_tones()[:5],
                                  default_sentence_pool()[:8], rng)
    pi, _ = gibbs_stationary_exact(joint)

    # independent check that pi is a fixed point of the two-step kernel
    probs = joint.probs
    p_s_t = probs / probs.sum(axis=1, keepdims=True)
    p_t_s = probs / probs.sum(axis=0, keepdims=True)
    kernel = p_s_t @ p_t_s.T
    assert float(np.abs(pi @ kernel - pi).sum()) < 1e-12

    config = ExperimentConfig(
        experiment_id="stationarity", n_chains=200, n_iterations=200,
        rng_seed=11, backend={"kind": "synthetic"},
        seed_items=tuple(Tone(t) for t in joint.tones),
        trials_min=200, trials_max=200)
    engine = create_experiment(config)
    run_autonomous(engine, SyntheticChainAgent(joint))

    counts = {t: 0 for t in joint.tones}
    for chain in engine.chains.values():
        for entry in chain.history:
            if entry.iteration > 100 and isinstance(entry.item, Tone):
                counts[entry.item.text] += 1
    total = sum(counts.values())
    assert total == 200 * 50  # tones sit on even iterations 102..200
    empirical = np.array([counts[t] / total for t in joint.tones])

    assert total_variation(empirical, pi) < 0.05
    assert time.perf_counter() - start < 30.0


def test_procrustes_recovers_planted_map_and_noise_floor():
    """Noiseless recovery of a planted orthogonal map on a 40x80 cloud,
    plus the sigma=0.01 residual against the analytic floor.

    The floor counts leftover degrees of freedom: the centered cloud spans
    p = 39 directions, the orbit of an 80-dim orthogonal map through it has
    dimension n(n-1)/2 - (n-p)(n-p-1)/2, and the expected squared residual
    is sigma^2 times the remaining (m-1)n - d_eff dimensions.

    Recovering the map itself needs more: with only 39 independent centered
    points in 80 dimensions the fit is unconstrained on a 41-dimensional
    complement, where the solver's completion is arbitrary, so the distance
    to the planted map stays O(1) no matter how exact the fit. The mapped
    points themselves coincide to machine precision.
    """
    start = time.perf_counter()
    m, n, sigma = 40, 80, 0.01
    rng = np.random.default_rng(21)
    x = rng.normal(size=(m, n))
    q_star = _random_orthogonal(n, rng)
    y = x @ q_star

    q = procrustes(x, y)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    assert float(np.linalg.norm(xc @ q - yc)) < 1e-8

    noisy = y + rng.normal(0.0, sigma, size=(m, n))
    q_noisy = procrustes(x, noisy)
    nc = noisy - noisy.mean(axis=0)
    residual = float(np.linalg.norm(xc @ q_noisy - nc))
    p = m - 1
    d_eff = (n * (n - 1) - (n - p) * (n - p - 1)) / 2
    floor = sigma * np.sqrt((m - 1) * n - d_eff)
    assert abs(residual - floor) / floor < 0.05

    assert time.perf_counter() - start < 1.0

    assert float(np.linalg.norm(q - q_star)) < 1e-8


def test_transport_self_alignment_concentrates_on_diagonal():
    start = time.perf_counter()
    rng = np.random.default_rng(31)
    cloud = rng.normal(size=(40, 8))
    result = gwot(cloud, cloud)

    coupling = result.coupling
    diagonal_mass = float(np.trace(coupling)) / float(coupling.sum())
    assert diagonal_mass >= 0.90

    history = result.hyperparameters["objective_history"]
    for before, after in zip(history, history[1:]):
        assert after <= before + 1e-12

    assert time.perf_counter() - start < 10.0


def test_matching_recovers_planted_permutation():
    """Full random permutation plus rotation plus sigma=0.05 noise on 40
    points: the matcher must name at least 95% of rows correctly on at
    least 8 of 10 planted instances."""
    start = time.perf_counter()
    successes = 0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        x = rng.normal(size=(40, 8))
        q_star = _random_orthogonal(8, rng)
        perm = rng.permutation(40)
        y = (x @ q_star)[perm] + rng.normal(0.0, 0.05, size=(40, 8))
        correct = np.argsort(perm)  # y[j] carries x[perm[j]]
        result = bli(x, y, BliParams(seed=seed))
        recovered = float(np.mean(np.array(result.matching) == correct))
        successes += recovered >= 0.95
    assert successes >= 8
    assert time.perf_counter() - start < 30.0


def test_benchmark_orders_methods_on_planted_fixture():
    start = time.perf_counter()
    x, y, truth = rotated_permuted_fixture(seed=5, m=40, n=8)
    report = run_benchmark(x, y, truth, seeds=100)
    assert report.seeds == 100

    recovery = {method: report.rows[method]["similarity_recovery"]
                for method in ("bli", "procrustes", "random")}
    bli_mean, bli_low, _ = recovery["bli"]
    proc_mean, proc_low, _ = recovery["procrustes"]
    rand_mean, _, rand_high = recovery["random"]

    assert bli_mean >= proc_mean
    assert proc_mean > rand_mean
    assert bli_low > rand_high  # CI separation, not just point estimates
    assert proc_low > rand_high

    assert time.perf_counter() - start < 300.0


def test_mds_recovers_planar_configuration():
    rng = np.random.default_rng(61)
    planar = rng.normal(size=(40, 2))
    solution = mds(_pair_distances(planar), dim=2)
    q = procrustes(solution.points, planar)
    recovered = (solution.points - solution.points.mean(axis=0)) @ q
    target = planar - planar.mean(axis=0)
    assert float(np.linalg.norm(recovered - target)) < 1e-6

    triangle = mds(np.array([[0.0, 1.0, 1.0],
                             [1.0, 0.0, 1.0],
                             [1.0, 1.0, 0.0]]), dim=2)
    sides = _pair_distances(triangle.points)[np.triu_indices(3, 1)]
    assert float(np.abs(sides - 1.0).max()) < 1e-9


def test_principal_axis_explains_eigenvalue_share():
    """Against an independent eigendecomposition of the scatter matrix."""
    rng = np.random.default_rng(71)
    cloud = rng.normal(size=(500, 2)) * np.array([3.0, 0.7])
    angle = 0.6
    rotation = np.array([[np.cos(angle), -np.sin(angle)],
                         [np.sin(angle), np.cos(angle)]])
    cloud = cloud @ rotation.T
    solution = MdsSolution(
        tuple((f"t{i:03d}", "synthetic") for i in range(len(cloud))),
        cloud, 0.0)

    centered = cloud - cloud.mean(axis=0)
    eigenvalues, eigenvectors = np.linalg.eigh(centered.T @ centered)
    lam2, lam1 = eigenvalues  # ascending
    principal_axis = eigenvectors[:, 1]

    share = explained_variance(solution, principal_axis, "synthetic")
    assert abs(share - lam1 / (lam1 + lam2)) <= 1e-6


def test_entropy_exact_values():
    assert entropy_bits(tone_histogram([f"t{i}" for i in range(8)])) == 3.0
    assert entropy_bits(tone_histogram(["calm"] * 12)) == 0.0


def test_bootstrap_interval_covers_attenuated_correlation():
    """Split-half pairs x = t + e1, y = t + e2 have population correlation
    1 / (1 + noise variance); the percentile interval must cover it in at
    least 90% of 200 simulated datasets."""
    noise_variance = 0.5
    attenuated = 1.0 / (1.0 + noise_variance)
    n_items, n_sims = 60, 200

    def stat(pairs):
        return pearson([a for a, _ in pairs], [b for _, b in pairs])

    covered = 0
    for s in range(n_sims):
        rng = np.random.default_rng(9000 + s)
        true_scores = rng.normal(size=n_items)
        x = true_scores + rng.normal(0.0, np.sqrt(noise_variance), n_items)
        y = true_scores + rng.normal(0.0, np.sqrt(noise_variance), n_items)
        result = bootstrap_ci(stat, list(zip(x, y)), n_boot=1000, rng=rng)
        covered += result.ci_low <= attenuated <= result.ci_high
    assert covered >= 0.90 * n_sims


# every filter row, both response kinds, toggles on and off; the
# politely/polite pair pins the stemmer-level overlap in both directions
SENTENCE_PROMPT = "We should leave before the rain starts."
FILTER_CASES = [
    # (validator, response, prompt, config, expected kind or None)
    ("S", "The committee will review every proposal before Friday.", "calm",
     FilterConfig(), None),
    ("S", "Only four short words.", "calm", FilterConfig(), "too-short"),
    ("S", "Exactly five words right here.", "calm", FilterConfig(),
     "too-short"),
    ("S", "These six short words just pass.", "calm", FilterConfig(), None),
    ("S", "The committee will review every proposal before Friday.", "calm",
     FilterConfig(grammar=True), "not-grammatical"),
    ("S", "The committee will review every proposal before Friday.", "calm",
     FilterConfig(grammar=True), None),
    ("S", "The committee will review every proposal before Friday.", "calm",
     FilterConfig(), None),
    ("S", "She answered politely despite all the chaos.", "polite",
     FilterConfig(), "stem-overlap"),
    ("S", "He stayed polite through the entire meeting.", "polite",
     FilterConfig(), "stem-overlap"),
    ("S", "She answered politely despite all the chaos.", "polite",
     FilterConfig(stem_overlap=False), None),
    ("S", "The whole damn meeting ran long again.", "calm",
     FilterConfig(), "profanity"),
    ("S", "The whole damn meeting ran long again.", "calm",
     FilterConfig(profanity=False), None),
    ("S", "The whole DAMN meeting ran long again.", "calm",
     FilterConfig(), "profanity"),
    ("S", "They replied politely, damn them all anyway.", "polite",
     FilterConfig(), "stem-overlap"),
    ("S", "The fact of the matter stays unchanged.", "matter-of-fact",
     FilterConfig(), "stem-overlap"),
    ("T", "calm", SENTENCE_PROMPT, FilterConfig(), None),
    ("T", "Calm", SENTENCE_PROMPT, FilterConfig(), None),
    ("T", "matter-of-fact", SENTENCE_PROMPT, FilterConfig(), None),
    ("T", "polite!", SENTENCE_PROMPT, FilterConfig(), "bad-charset"),
    ("T", "very calm", SENTENCE_PROMPT, FilterConfig(), "bad-charset"),
    ("T", "soothing2", SENTENCE_PROMPT, FilterConfig(), "bad-charset"),
    ("T", "xqzv", SENTENCE_PROMPT, FilterConfig(), "misspelled"),
    ("T", "politee", SENTENCE_PROMPT, FilterConfig(), "misspelled"),
    ("T", "xqzv", SENTENCE_PROMPT, FilterConfig(spelling=False),
     "not-adjective"),
    ("T", "morning", SENTENCE_PROMPT, FilterConfig(), "not-adjective"),
    ("T", "morning", SENTENCE_PROMPT, FilterConfig(adjective=False), None),
    ("T", "polite", "They politely refused every offer we made.",
     FilterConfig(), "stem-overlap"),
    ("T", "polite", "They politely refused every offer we made.",
     FilterConfig(stem_overlap=False), None),
    ("T", "damn", SENTENCE_PROMPT, FilterConfig(), "profanity"),
    ("T", "damn", SENTENCE_PROMPT, FilterConfig(profanity=False), None),
]
# rows 5-7 reuse one sentence under different grammar wiring
GRAMMAR_VERDICTS = {4: False, 5: True, 6: False}


def test_filter_table_conformance():
    assert len(FILTER_CASES) == 30
    lexicons = default_lexicons()
    mismatches = []
    for i, (kind, response, prompt, config, expected) in \
            enumerate(FILTER_CASES):
        if kind == "S":
            checker = None
            if i in GRAMMAR_VERDICTS:
                verdict = GRAMMAR_VERDICTS[i]
                checker = lambda text, v=verdict: v
            error = validate_sentence(response, prompt, lexicons, config,
                                      grammar_checker=checker)
        else:
            error = validate_tone(response, prompt, lexicons, config)
        got = error.kind if error else None
        if got != expected:
            mismatches.append(f"row {i}: {response!r} -> {got!r}, "
                              f"expected {expected!r}")
    assert not mismatches, "\n".join(mismatches)


def test_released_dataset_reproduction():
    """Tolerance-banded reproduction from ingested release data.

    Needs the environment variable TONELAB_DATASET pointing at a directory
    with a dataset.json manifest (see tonelab.ingest). The manifest's
    domains must include one name containing "human" and one containing
    "gpt" or "llm"; a "published" section may add label-led CSV grids
    under "intra" (per domain), "cross", and "benchmark" for the matrix
    and benchmark comparisons.
    """
    root = os.environ.get(DATASET_ENV)
    if not root:
        pytest.skip(f"{DATASET_ENV} is not set; released-data checks "
                    "need the ingested dataset")
    root = Path(root)
    if not (root / "dataset.json").exists():
        pytest.skip(f"no dataset.json under {root}")

    domains, manifest = load_dataset(root)

    def pick(*needles):
        for name in domains:
            if any(needle in name.lower() for needle in needles):
                return name
        raise AssertionError(f"no domain named like {needles} in {list(domains)}")

    gpt = pick("gpt", "llm")
    human = pick("human")
    gpt_entropy = entropy_bits(tone_histogram(domains[gpt].tone_annotations))
    human_entropy = entropy_bits(
        tone_histogram(domains[human].tone_annotations))
    assert abs(gpt_entropy - 3.10) <= 0.05
    assert abs(human_entropy - 5.48) <= 0.05

    published = manifest.get("published", {})

    def matrix_for(name):
        data = domains[name]
        tones = sorted({r.tone for r in data.rating_records})
        sentences = sorted({r.sentence for r in data.rating_records})
        return aggregate_matrix(data.rating_records, tones, sentences,
                                missing_policy="fill-midpoint", domain=name)

    def upper(values):
        return np.asarray(values)[np.triu_indices(len(values), 1)]

    for name, path in published.get("intra", {}).items():
        _, _, reference = load_float_grid(root / path)
        computed = intra_correlation(matrix_for(pick(name))).values
        assert pearson(upper(computed), upper(reference)) >= 0.95

    if "cross" in published:
        _, _, reference = load_float_grid(root / published["cross"])
        computed = cross_correlation(matrix_for(human),
                                     matrix_for(gpt)).values
        flat_c = np.asarray(computed).ravel()
        flat_r = np.asarray(reference).ravel()
        assert pearson(flat_c, flat_r) >= 0.95

    if "benchmark" in published:
        metrics, methods, grid = load_float_grid(
            root / published["benchmark"])
        report = run_benchmark(
            EmbeddingSet.from_rating_matrix(matrix_for(human)),
            EmbeddingSet.from_rating_matrix(matrix_for(gpt)),
            cross_correlation(matrix_for(human), matrix_for(gpt)).values)
        for i, method in enumerate(methods):
            for j, metric in enumerate(metrics):
                if method in report.rows and metric in report.rows[method]:
                    mean = report.rows[method][metric][0]
                    assert abs(mean - grid[i, j]) <= 0.1, \
                        f"{method}/{metric}: {mean} vs published {grid[i, j]}"
