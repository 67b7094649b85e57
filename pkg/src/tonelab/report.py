"""Assembly of the single-document analysis report and its CSV exports.

The report is the contract between the pipeline and external consumers
(plotters, the web UI, the released-data comparison): one JSON document,
validated against the schema shipped in data/report-schema.json, plus flat
CSV mirrors of every matrix-shaped section.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import jsonschema

from . import __version__
from .core import InputError, canonical_json
from .ratings import (FeatureRecord, RatingRecord, SimilarityRecord,
                      aggregate_features, aggregate_matrix, read_records)
from .analysis import (BootstrapResult, bootstrap_ci, biplot_arrows,
                       corr_to_dissimilarity, cross_correlation, entropy_bits,
                       intra_correlation, mds, nn_matching, same_tone_distances,
                       select_taxonomy, shared_space, split_half, tfidf,
                       tone_histogram)

REPORT_SCHEMA_VERSION = 1

# domains below these sizes cannot support the correlation-of-correlations
# reliability statistics, so those report keys are omitted rather than forced
MIN_TONES_FOR_MATRIX_RELIABILITY = 3
MIN_SENTENCES_FOR_MATRIX_RELIABILITY = 4


@dataclass
class DomainData:
    """Everything the analyze stage knows about one domain."""

    domain: str
    tone_annotations: list[str]
    sentences: list[str]
    rating_records: list[RatingRecord] = field(default_factory=list)
    similarity_records: list[SimilarityRecord] = field(default_factory=list)
    feature_records: list[FeatureRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.domain:
            raise InputError("domain name must not be empty")
        if not self.tone_annotations:
            raise InputError(
                f"domain {self.domain!r} has no accepted tone annotations; "
                "run the elicitation stage first")


def read_trial_annotations(path) -> tuple[list[str], list[str]]:
    """Accepted responses from a trial log: (tone annotations, sentences)."""
    tones: list[str] = []
    sentences: list[str] = []
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise InputError(
                    f"corrupt trial log {path} at line {lineno}: {exc}") from exc
            if rec.get("status") != "accepted":
                continue
            response = rec.get("response") or {}
            if response.get("kind") == "tone":
                tones.append(response["text"])
            elif response.get("kind") == "sentence":
                sentences.append(response["text"])
    return tones, sentences


def domain_data_from_run(run_dir, domain: str) -> DomainData:
    """Load one domain's stage outputs from its run directory.

    trials.jsonl is required; the rating-stage logs are optional so a
    histogram-only report can be built right after elicitation.
    """
    run_dir = Path(run_dir)
    trial_log = run_dir / "trials.jsonl"
    if not trial_log.exists():
        raise InputError(
            f"missing stage output {trial_log}; the elicit stage has not run")
    tones, sentences = read_trial_annotations(trial_log)

    def logged(name, kinds):
        path = run_dir / name
        if not path.exists():
            return []
        records = read_records(path)
        bad = [r for r in records if not isinstance(r, kinds)]
        if bad:
            raise InputError(
                f"{path} holds a {type(bad[0]).__name__}, which does not "
                "belong in this log")
        return records

    return DomainData(
        domain=domain,
        tone_annotations=tones,
        sentences=sentences,
        rating_records=logged("ratings.jsonl", RatingRecord),
        similarity_records=logged("similarity.jsonl", SimilarityRecord),
        feature_records=logged("features.jsonl", FeatureRecord),
    )


# --------------------------------------------------------------------------
# section builders


def _interval(result: BootstrapResult) -> dict:
    return {
        "estimate": result.estimate,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "n_replicates": result.n_replicates,
    }


def _matrix_doc(corr) -> dict:
    return {
        "row_labels": [_label_str(l) for l in corr.row_labels],
        "col_labels": [_label_str(l) for l in corr.col_labels],
        "values": [[float(v) for v in row] for row in corr.values],
    }


def _label_str(label) -> str:
    if isinstance(label, tuple):
        return "/".join(label)
    return str(label)


def _mds_doc(solution) -> dict:
    labels = [list(l) if isinstance(l, tuple) else l for l in solution.labels]
    return {
        "labels": labels,
        "points": [[float(v) for v in row] for row in solution.points],
        "stress": float(solution.stress),
        "transform": solution.transform,
    }


def _rating_matrix(data: DomainData):
    if not data.rating_records:
        return None
    tones = tuple(sorted({r.tone for r in data.rating_records}))
    sentences = tuple(sorted({r.sentence for r in data.rating_records}))
    return aggregate_matrix(data.rating_records, tones, sentences,
                            domain=data.domain)


def _reliability_or_none(records, partition_unit, stat, n_boot, rng, **kwargs):
    """split_half, except degenerate small-sample halves omit the figure
    rather than failing the whole report."""
    try:
        return split_half(records, partition_unit, stat, n_boot=n_boot,
                          rng=rng, **kwargs)
    except InputError:
        return None


def _histogram_reliability(annotations, n_boot, rng):
    vocab = sorted(set(annotations))
    if len(annotations) < 4 or len(vocab) < 2:
        return None

    class _Ann:
        __slots__ = ("tone",)

        def __init__(self, tone):
            self.tone = tone

    records = [_Ann(t) for t in annotations]

    def stat(half):
        counts = {t: 0 for t in vocab}
        for rec in half:
            counts[rec.tone] += 1
        return np.array([counts[t] for t in vocab], dtype=float)

    return _reliability_or_none(records, "trials", stat, n_boot, rng,
                                group_key=lambda r: r.tone)


def _matrix_reliability(data: DomainData, matrix, n_boot, rng):
    tones = matrix.tones
    sentences = set(matrix.sentences)
    if (len(tones) < MIN_TONES_FOR_MATRIX_RELIABILITY
            or len(sentences) < MIN_SENTENCES_FOR_MATRIX_RELIABILITY):
        return None
    iu = np.triu_indices(len(tones), k=1)

    def stat(half):
        half_sentences = tuple(sorted({r.sentence for r in half}))
        m = aggregate_matrix(half, tones, half_sentences,
                             missing_policy="fill-midpoint",
                             domain=data.domain)
        # a half whose row is constant carries no structure signal; score its
        # correlations 0 instead of failing the whole bootstrap
        centered = m.means - m.means.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1)
        z = centered / np.where(norms == 0, 1.0, norms)[:, None]
        corr = z @ z.T
        corr[norms == 0, :] = 0.0
        corr[:, norms == 0] = 0.0
        return corr[iu]

    return _reliability_or_none(data.rating_records, "sentences", stat,
                                n_boot, rng)


def _similarity_reliability(records, n_boot, rng):
    pairs = sorted({r.pair() for r in records if r.tone_a != r.tone_b})
    if len(pairs) < 2:
        return None
    counts = {}
    for r in records:
        counts[r.pair()] = counts.get(r.pair(), 0) + 1
    if min(counts.get(p, 0) for p in pairs) < 2:
        return None
    distinct = [r for r in records if r.tone_a != r.tone_b]

    def stat(half):
        sums = {p: 0.0 for p in pairs}
        n = {p: 0 for p in pairs}
        for r in half:
            sums[r.pair()] += r.value
            n[r.pair()] += 1
        return np.array([sums[p] / n[p] if n[p] else 3.0 for p in pairs])

    return _reliability_or_none(distinct, "per-pair-ratings", stat,
                                n_boot, rng)


def _domain_section(data: DomainData, matrix, *, n_boot, mds_dim, top_k,
                    top_tokens_entry, rng) -> dict:
    hist = tone_histogram(data.tone_annotations)
    entropy_ci = bootstrap_ci(
        lambda ann: entropy_bits(tone_histogram(ann)),
        data.tone_annotations, n_boot=n_boot, rng=rng)
    section = {
        "n_annotations": hist.total,
        "n_sentences": len(data.sentences),
        "histogram": {tone: int(count) for tone, count in sorted(hist.counts.items())},
        "entropy_bits": _interval(entropy_ci),
        "top_tones": hist.top(top_k),
    }
    if top_tokens_entry is not None:
        section["tfidf_top"] = top_tokens_entry

    reliability = {}
    hist_rel = _histogram_reliability(data.tone_annotations, n_boot, rng)
    if hist_rel is not None:
        reliability["histogram"] = _interval(hist_rel)

    if matrix is not None:
        corr = intra_correlation(matrix)
        section["intra_correlation"] = _matrix_doc(corr)
        labels = tuple((t, data.domain) for t in matrix.tones)
        solution = mds(corr_to_dissimilarity(corr), dim=mds_dim,
                       labels=labels, transform="1-r")
        section["mds"] = _mds_doc(solution)
        matrix_rel = _matrix_reliability(data, matrix, n_boot, rng)
        if matrix_rel is not None:
            reliability["rating_matrix"] = _interval(matrix_rel)
        if data.feature_records:
            features = aggregate_features(data.feature_records, matrix.tones)
            section["feature_means"] = {
                "row_labels": list(features.tones),
                "col_labels": list(features.features),
                "values": [[float(v) for v in row] for row in features.means],
            }
            # the regression needs more tones than regressors; tiny runs
            # ship the feature means without arrows
            if len(matrix.tones) > len(features.features) + 1:
                try:
                    arrows = biplot_arrows(solution, features, data.domain)
                except InputError:
                    arrows = None
                if arrows is not None:
                    section["arrows"] = [
                        {"feature": a.feature,
                         "direction": [float(v) for v in a.direction],
                         "explained_variance": float(a.explained_variance)}
                        for a in arrows
                    ]
    if data.similarity_records:
        sim_rel = _similarity_reliability(data.similarity_records, n_boot, rng)
        if sim_rel is not None:
            reliability["similarity"] = _interval(sim_rel)
    if reliability:
        section["reliability"] = reliability
    return section


def _cross_section(data_a, matrix_a, data_b, matrix_b, *, n_boot, mds_dim,
                   rng) -> Optional[dict]:
    if matrix_a is None or matrix_b is None:
        return None
    cross = cross_correlation(matrix_a, matrix_b)
    section = {
        "domain_a": data_a.domain,
        "domain_b": data_b.domain,
        "cross_correlation": _matrix_doc(cross),
    }
    graph = nn_matching(matrix_a, matrix_b, n_boot=n_boot, rng=rng)
    section["nn_matching"] = {
        "n_boot": graph.n_boot,
        "a_to_b": {s: {"target": t, "frequency": float(f)}
                   for s, (t, f) in sorted(graph.a_to_b.items())},
        "b_to_a": {s: {"target": t, "frequency": float(f)}
                   for s, (t, f) in sorted(graph.b_to_a.items())},
    }
    if matrix_a.tones == matrix_b.tones:
        solution = shared_space(matrix_a, matrix_b, dim=mds_dim)
        section["shared_mds"] = _mds_doc(solution)
        section["same_tone_distances"] = [
            [tone, float(d)] for tone, d in same_tone_distances(solution)
        ]
    return section


def build_report(domains: Sequence[DomainData], *, n_boot: int = 1000,
                 mds_dim: int = 2, taxonomy_k: int = 20,
                 top_tokens: int = 20, rng_seed: int = 0) -> dict:
    """Assemble the full analysis document for one or two domains.

    Every stochastic quantity (bootstrap CIs, nearest-neighbor vote
    frequencies) draws from a generator seeded with rng_seed, so rebuilding
    with the same inputs gives a byte-identical document.
    """
    domains = list(domains)
    if not 1 <= len(domains) <= 2:
        raise InputError(f"report covers one or two domains, got {len(domains)}")
    names = [d.domain for d in domains]
    if len(set(names)) != len(names):
        raise InputError(f"duplicate domain name in {names!r}")

    rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(7,)))
    scored = tfidf({d.domain: d.sentences for d in domains if d.sentences})

    def top_entry(domain):
        table = scored.get(domain)
        if not table:
            return None
        ranked = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
        return [[token, float(score)] for token, score in ranked[:top_tokens]]

    matrices = [_rating_matrix(d) for d in domains]
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "generated_by": f"tonelab {__version__}",
        "rng_seed": rng_seed,
        "n_boot": n_boot,
        "domains": {
            d.domain: _domain_section(
                d, m, n_boot=n_boot, mds_dim=mds_dim, top_k=taxonomy_k,
                top_tokens_entry=top_entry(d.domain), rng=rng)
            for d, m in zip(domains, matrices)
        },
    }
    if len(domains) == 2:
        hist_a = tone_histogram(domains[0].tone_annotations)
        hist_b = tone_histogram(domains[1].tone_annotations)
        doc["taxonomy"] = select_taxonomy(hist_a, hist_b, taxonomy_k)
        cross = _cross_section(domains[0], matrices[0], domains[1], matrices[1],
                               n_boot=n_boot, mds_dim=mds_dim, rng=rng)
        if cross is not None:
            doc["cross"] = cross
    validate_report(doc)
    return doc


# --------------------------------------------------------------------------
# schema validation


def load_report_schema() -> dict:
    raw = resources.files("tonelab").joinpath("data/report-schema.json")
    return json.loads(raw.read_text(encoding="utf-8"))


def validate_report(doc: dict) -> None:
    """Check a document against the shipped schema; InputError on violation."""
    try:
        jsonschema.validate(doc, load_report_schema(),
                            cls=jsonschema.Draft7Validator)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"report violates schema at {path}: {exc.message}") from exc


def attach_benchmark(doc: dict, benchmark_doc: dict) -> dict:
    """Merge an alignment benchmark sidecar into a report document."""
    merged = dict(doc)
    merged["benchmark"] = benchmark_doc
    validate_report(merged)
    return merged


# --------------------------------------------------------------------------
# CSV mirrors


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def report_to_csvs(doc: dict, out_dir) -> list[Path]:
    """Flat CSV mirrors of the matrix-shaped report sections."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name, header, rows):
        path = out_dir / name
        _write_csv(path, header, rows)
        written.append(path)

    def matrix_rows(mdoc):
        for label, row in zip(mdoc["row_labels"], mdoc["values"]):
            yield [label] + [_fmt(v) for v in row]

    for domain, section in doc["domains"].items():
        emit(f"histogram_{domain}.csv", ["tone", "count"],
             [[t, c] for t, c in sorted(section["histogram"].items())])
        if "tfidf_top" in section:
            emit(f"tfidf_{domain}.csv", ["token", "score"],
                 [[t, _fmt(s)] for t, s in section["tfidf_top"]])
        if "intra_correlation" in section:
            mdoc = section["intra_correlation"]
            emit(f"intra_{domain}.csv", ["tone"] + mdoc["col_labels"],
                 matrix_rows(mdoc))
        if "mds" in section:
            sdoc = section["mds"]
            emit(f"mds_{domain}.csv",
                 ["tone"] + [f"dim{i}" for i in range(len(sdoc["points"][0]))],
                 [[_label_str(tuple(l) if isinstance(l, list) else l)]
                  + [_fmt(v) for v in p]
                  for l, p in zip(sdoc["labels"], sdoc["points"])])
        if "arrows" in section:
            dims = len(section["arrows"][0]["direction"])
            emit(f"arrows_{domain}.csv",
                 ["feature"] + [f"dim{i}" for i in range(dims)]
                 + ["explained_variance"],
                 [[a["feature"]] + [_fmt(v) for v in a["direction"]]
                  + [_fmt(a["explained_variance"])]
                  for a in section["arrows"]])

    cross = doc.get("cross")
    if cross:
        mdoc = cross["cross_correlation"]
        emit("cross_correlation.csv", ["tone"] + mdoc["col_labels"],
             matrix_rows(mdoc))
        if "shared_mds" in cross:
            sdoc = cross["shared_mds"]
            emit("mds_shared.csv",
                 ["tone", "domain"] + [f"dim{i}" for i in
                                       range(len(sdoc["points"][0]))],
                 [list(l) + [_fmt(v) for v in p]
                  for l, p in zip(sdoc["labels"], sdoc["points"])])
        if "same_tone_distances" in cross:
            emit("same_tone_distances.csv", ["tone", "distance"],
                 [[t, _fmt(d)] for t, d in cross["same_tone_distances"]])
        edges = cross["nn_matching"]
        emit("nn_matching.csv", ["direction", "source", "target", "frequency"],
             [[direction, s, e["target"], _fmt(e["frequency"])]
              for direction in ("a_to_b", "b_to_a")
              for s, e in sorted(edges[direction].items())])
    return written


def write_report(doc: dict, path) -> None:
    Path(path).write_text(canonical_json(doc) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing report document {path}; run analyze first")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"unreadable report {path}: {exc}") from exc
    validate_report(doc)
    return doc


# --------------------------------------------------------------------------
# human-readable summary


def report_markdown(doc: dict) -> str:
    """Small markdown digest: headline numbers and the benchmark table."""
    lines = [f"# Tone space report", ""]
    lines.append(f"Generated by {doc['generated_by']}, seed {doc['rng_seed']}, "
                 f"{doc['n_boot']} bootstrap replicates.")
    lines.append("")
    for domain, section in doc["domains"].items():
        e = section["entropy_bits"]
        lines.append(f"## Domain: {domain}")
        lines.append("")
        lines.append(f"- annotations: {section['n_annotations']}, distinct "
                     f"tones: {len(section['histogram'])}")
        lines.append(f"- tone entropy: {e['estimate']:.3f} bits "
                     f"[{e['ci_low']:.3f}, {e['ci_high']:.3f}]")
        if "top_tones" in section and section["top_tones"]:
            lines.append(f"- top tones: {', '.join(section['top_tones'][:10])}")
        for name, rel in section.get("reliability", {}).items():
            lines.append(f"- split-half {name}: {rel['estimate']:.3f} "
                         f"[{rel['ci_low']:.3f}, {rel['ci_high']:.3f}]")
        if "mds" in section:
            lines.append(f"- MDS stress: {section['mds']['stress']:.4f}")
        lines.append("")
    if "taxonomy" in doc:
        lines.append(f"Shared taxonomy ({len(doc['taxonomy'])} tones): "
                     f"{', '.join(doc['taxonomy'])}")
        lines.append("")
    cross = doc.get("cross")
    if cross and "same_tone_distances" in cross:
        worst = cross["same_tone_distances"][:5]
        lines.append("Largest same-tone displacement in the shared space: "
                     + ", ".join(f"{t} ({d:.3f})" for t, d in worst))
        lines.append("")
    bench = doc.get("benchmark")
    if bench:
        lines.append("## Alignment benchmark")
        lines.append("")
        lines.append(f"{bench['seeds']} seeds per stochastic method.")
        lines.append("")
        metrics = sorted({m for row in bench["rows"].values() for m in row})
        lines.append("| method | " + " | ".join(metrics) + " |")
        lines.append("|" + "---|" * (len(metrics) + 1))
        for method, row in sorted(bench["rows"].items()):
            cells = []
            for metric in metrics:
                if metric in row:
                    mean, lo, hi = row[metric]
                    cells.append(f"{mean:.3f} [{lo:.3f}, {hi:.3f}]")
                else:
                    cells.append("-")
            lines.append(f"| {method} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)
