"""Command-line pipeline: elicit chains, run the rating stages, analyze,
benchmark alignment, and serve the human experiment.

Every stage writes its primary outputs plus a manifest-<stage>.json into one
run directory. Reruns with the same inputs and seed are byte-identical in
the primary outputs; wall-clock timestamps live only in the manifest. A
stage refuses to overwrite existing outputs unless --force is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import socket
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (LlmChainAgent, LlmParams, SyntheticChainAgent,
                     SyntheticFeatureRater, SyntheticJoint, SyntheticRater,
                     SyntheticSimilarityJudge, default_sentence_pool,
                     load_features)
from .alignment import (EmbeddingSet, rotated_permuted_fixture, run_benchmark,
                        benchmark_to_csv, benchmark_to_json)
from .analysis import cross_correlation, select_taxonomy, tone_histogram
from .chains import ExperimentConfig, create_experiment, run_autonomous
from .core import ConfigError, InputError, Tone, ToneLabError, canonical_json
from .ingest import load_float_grid
from .ratings import (FeatureRecord, RatingRecord, SimilarityRecord,
                      aggregate_features, aggregate_matrix,
                      aggregate_similarity, feature_matrix_to_csv,
                      rating_matrix_from_csv, rating_matrix_to_csv,
                      read_records, schedule_rating_plan,
                      schedule_similarity_plan, similarity_matrix_to_csv,
                      write_records)
from .report import (attach_benchmark, build_report, domain_data_from_run,
                     read_report, report_markdown, report_to_csvs,
                     write_report)
from .service import build_service
from .validation import default_seed_tones

STAGES = ("elicit", "rate", "similarity", "features", "analyze", "align",
          "report", "serve")

DEFAULT_CONFIG: dict = {
    "experiment": {
        "experiment_id": "exp",
        "n_chains": 4,
        "n_iterations": 6,
        "rng_seed": 0,
        "backend": {"kind": "synthetic"},
        "seed_tones": None,
        "trials_min": 10,
        "trials_max": 12,
        "filters": {},
        "timeout_seconds": 600.0,
        "retry_limit": 3,
    },
    "synthetic": {
        "joint": None,
        "n_tones": 5,
        "n_sentences": 8,
        "concentration": 1.0,
        "noise_sd": 0.5,
    },
    "llm": {
        "model": "",
        "endpoint": "",
        "temperature": 0.8,
        "auth_env": "TONELAB_API_KEY",
    },
    "rating": {"repeats": 2, "session_size": 50, "top_k_tones": 20,
               "max_sentences": 40},
    "similarity": {"repeats": 2, "session_size": 50},
    "features": {"repeats": 2, "session_size": 50},
    "analysis": {"n_boot": 1000, "mds_dim": 2, "taxonomy_k": 20,
                 "top_tokens": 20},
    "align": {"seeds": 20},
    "serve": {"host": "127.0.0.1", "port": 8321, "static_dir": None},
}

# spawn keys carving per-stage RNG streams out of the one experiment seed;
# the chain engine itself owns keys (0,) and (1, ...)
JOINT_KEY = 3
PLAN_KEYS = {"rate": 10, "similarity": 11, "features": 12}
RESPONSE_KEYS = {"rate": 20, "similarity": 21, "features": 22}


# --------------------------------------------------------------------------
# config loading


def load_config(path=None) -> dict:
    """Defaults merged with the user's JSON config, section by section.

    Unknown sections or keys are configuration errors: silently ignoring a
    typo like "experimnt" would run a whole pipeline with defaults.
    """
    merged = {name: dict(section) for name, section in DEFAULT_CONFIG.items()}
    if path is None:
        return merged
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        user = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"unreadable config {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config root must be a JSON object: {path}")
    unknown = sorted(set(user) - set(merged))
    if unknown:
        raise ConfigError(
            f"unknown config section(s) {unknown}; expected {sorted(merged)}")
    for name, section in user.items():
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        bad_keys = sorted(set(section) - set(merged[name]))
        if bad_keys:
            raise ConfigError(
                f"unknown key(s) {bad_keys} in config section {name!r}")
        merged[name].update(section)
    return merged


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def experiment_config(cfg: dict, args, seed_tones=None) -> ExperimentConfig:
    section = cfg["experiment"]
    backend = dict(section["backend"])
    if getattr(args, "backend", None):
        backend = {"kind": args.backend}
    seed = args.seed if args.seed is not None else section["rng_seed"]
    seed_tones = seed_tones or section["seed_tones"] or default_seed_tones()
    return ExperimentConfig(
        experiment_id=section["experiment_id"],
        n_chains=getattr(args, "chains", None) or section["n_chains"],
        n_iterations=getattr(args, "iters", None) or section["n_iterations"],
        rng_seed=seed,
        backend=backend,
        seed_items=tuple(Tone(t) for t in seed_tones),
        trials_min=section["trials_min"],
        trials_max=section["trials_max"],
        filters=_filter_config(section["filters"]),
        timeout_seconds=section["timeout_seconds"],
        retry_limit=section["retry_limit"],
    )


def _filter_config(doc: dict):
    from .validation import FilterConfig
    try:
        return FilterConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad experiment.filters: {exc}") from exc


def llm_params(cfg: dict) -> LlmParams:
    section = cfg["llm"]
    if not section["model"] or not section["endpoint"]:
        raise ConfigError(
            "llm backend needs config llm.model and llm.endpoint")
    params = LlmParams(model=section["model"], endpoint=section["endpoint"],
                       temperature=section["temperature"],
                       auth_env=section["auth_env"])
    if not os.environ.get(params.auth_env):
        raise ConfigError(
            f"llm backend needs an auth token in the environment variable "
            f"{params.auth_env}")
    return params


# --------------------------------------------------------------------------
# manifests and output discipline


def write_manifest(out_dir: Path, stage: str, cfg: dict, seed: int,
                   inputs, outputs, started: float) -> Path:
    doc = {
        "experiment_id": cfg["experiment"]["experiment_id"],
        "stage": stage,
        "config_hash": config_hash(cfg),
        "rng_seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "started_at": started,
        "finished_at": time.time(),
    }
    path = out_dir / f"manifest-{stage}.json"
    path.write_text(canonical_json(doc) + "\n", encoding="utf-8")
    return path


def _claim_outputs(paths, force: bool) -> None:
    existing = [p for p in paths if Path(p).exists()]
    if existing and not force:
        listing = ", ".join(str(p) for p in existing)
        raise InputError(
            f"output already exists: {listing} (use --force to overwrite)")
    for p in existing:
        Path(p).unlink()


def _require_stage_output(path: Path, stage: str) -> Path:
    if not path.exists():
        raise InputError(f"missing {path}; run the {stage} stage first")
    return path


def _refuse_empty_log(path: Path, stage: str) -> None:
    if path.exists() and not read_records(path):
        raise InputError(f"{path} holds no records; run the {stage} stage")


# --------------------------------------------------------------------------
# elicit


def resolve_joint(cfg: dict, rng_seed: int) -> SyntheticJoint:
    section = cfg["synthetic"]
    if section["joint"]:
        return SyntheticJoint.from_dict(section["joint"])
    tones = (cfg["experiment"]["seed_tones"] or default_seed_tones())
    tones = tones[: section["n_tones"]]
    sentences = default_sentence_pool()[: section["n_sentences"]]
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed,
                                                       spawn_key=(JOINT_KEY,)))
    return SyntheticJoint.random(tones, sentences, rng,
                                 concentration=section["concentration"])


def _load_run_joint(out_dir: Path) -> SyntheticJoint:
    path = out_dir / "joint.json"
    if not path.exists():
        raise InputError(
            f"missing {path}; synthetic rating stages need the joint written "
            "by a synthetic elicit run")
    return SyntheticJoint.from_dict(json.loads(path.read_text(encoding="utf-8")))


def cmd_elicit(args) -> int:
    cfg = load_config(args.config)
    section = cfg["experiment"]
    backend = getattr(args, "backend", None) or section["backend"].get("kind")
    if backend == "human":
        return _serve(cfg, experiment_config(cfg, args), args)

    out_dir = Path(args.out or f"runs/{section['experiment_id']}")
    out_dir.mkdir(parents=True, exist_ok=True)
    trial_log = out_dir / "trials.jsonl"
    state = out_dir / "state.json"
    outputs = [trial_log, state]

    seed = args.seed if args.seed is not None else section["rng_seed"]
    joint = None
    if backend == "synthetic":
        # chains must be seeded from items the joint can answer for
        joint = resolve_joint(cfg, seed)
        agent = SyntheticChainAgent(joint)
        outputs.append(out_dir / "joint.json")
        config = experiment_config(cfg, args, seed_tones=list(joint.tones))
    else:
        params = llm_params(cfg)
        agent = LlmChainAgent(params, log_path=out_dir / "llm_exchanges.jsonl")
        config = experiment_config(cfg, args)

    started = time.time()
    _claim_outputs(outputs, args.force)
    if config.domain == "synthetic":
        (out_dir / "joint.json").write_text(canonical_json(joint.to_dict()) + "\n",
                                            encoding="utf-8")
    engine = create_experiment(config, log_path=trial_log)
    run_autonomous(engine, agent)
    engine.save_snapshot(state)
    write_manifest(out_dir, "elicit", cfg, config.rng_seed,
                   inputs=[args.config] if args.config else [],
                   outputs=outputs, started=started)
    n = len(engine.tone_trials()) + len(engine.sentence_trials())
    print(f"elicit: {n} accepted trials across {config.n_chains} chains "
          f"-> {trial_log}")
    return 0


# --------------------------------------------------------------------------
# rating stages


def _read_run_annotations(out_dir: Path) -> tuple[list[str], list[str]]:
    from .report import read_trial_annotations
    trial_log = _require_stage_output(out_dir / "trials.jsonl", "elicit")
    tones, sentences = read_trial_annotations(trial_log)
    if not tones:
        raise InputError(f"{trial_log} has no accepted tone annotations")
    return tones, sentences


def _elicited_items(out_dir: Path, cfg: dict,
                    with_dir=None) -> tuple[list[str], list[str]]:
    """Taxonomy tones and rated sentences for a run.

    With a second run the item set is the shared cross-domain taxonomy plus
    a sentence list drawn from both runs; the derivation is symmetric in the
    two directories, so rating each run "--with" the other rates the exact
    same grid and the cross-domain analyses line up column for column.
    """
    top_k = cfg["rating"]["top_k_tones"]
    tones, sentences = _read_run_annotations(out_dir)
    if with_dir is None:
        top = tone_histogram(tones).top(top_k)
        chosen: list[str] = []
        for s in sentences:
            if s not in chosen:
                chosen.append(s)
    else:
        other_tones, other_sentences = _read_run_annotations(Path(with_dir))
        top = select_taxonomy(tone_histogram(tones),
                              tone_histogram(other_tones), top_k)
        chosen = sorted(set(sentences) | set(other_sentences))
    return top, chosen[: cfg["rating"]["max_sentences"]]


def _llm_raters(cfg: dict):
    """Likert judges backed by the chat endpoint and shipped templates."""
    from .agents import llm_complete, load_templates, parse_response, render_prompt
    params = llm_params(cfg)
    templates = load_templates()
    definitions = {f["id"]: f for f in load_features()}

    class Fit:
        def rate(self, tone, sentence, rng=None):
            raw = llm_complete(params, render_prompt(
                templates["rate_fit"], tone=tone, sentence=sentence))
            return int(parse_response("integer_1_to_5", raw))

    class Similarity:
        def judge(self, tone_a, tone_b, rng=None):
            raw = llm_complete(params, render_prompt(
                templates["rate_similarity"], tone_a=tone_a, tone_b=tone_b))
            unit = float(parse_response("number_0_to_1", raw))
            return int(np.clip(round(1.0 + 4.0 * unit), 1, 5))

    class Feature:
        def rate(self, tone, feature, rng=None):
            doc = definitions[feature]
            raw = llm_complete(params, render_prompt(
                templates["rate_feature"], feature=doc["label"],
                feature_definition=doc["definition"], tone=tone))
            return int(parse_response("integer_1_to_5", raw))

    return Fit(), Similarity(), Feature()


def _stage_rngs(stage: str, seed: int, count: int):
    """One independent generator per scheduled response, order-free."""
    key = RESPONSE_KEYS[stage]
    return [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, i)))
            for i in range(count)]


def _run_rating_stage(args, stage: str):
    cfg = load_config(args.config)
    out_dir = Path(args.out or f"runs/{cfg['experiment']['experiment_id']}")
    seed = args.seed if args.seed is not None else cfg["experiment"]["rng_seed"]
    tones, sentences = _elicited_items(out_dir, cfg, getattr(args, "with_run", None))
    section = cfg[{"rate": "rating"}.get(stage, stage)]
    plan_rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(PLAN_KEYS[stage],)))

    if args.backend == "synthetic":
        joint = _load_run_joint(out_dir)
        noise_sd = cfg["synthetic"]["noise_sd"]
        fit = SyntheticRater(joint, noise_sd)
        sim = SyntheticSimilarityJudge(joint, noise_sd)
        feat = SyntheticFeatureRater(joint, seed=seed, noise_sd=noise_sd)
    else:
        fit, sim, feat = _llm_raters(cfg)

    started = time.time()
    if stage == "rate":
        plan = schedule_rating_plan(tones, sentences, section["repeats"],
                                    session_size=section["session_size"],
                                    rng=plan_rng)
        rngs = _stage_rngs(stage, seed, len(plan))
        records = [
            RatingRecord(tone=slot.tone, sentence=slot.sentence,
                         rater_id=f"rater-{slot.rater_slot:04d}",
                         value=fit.rate(slot.tone, slot.sentence, rng))
            for slot, rng in zip(plan, rngs)
        ]
        log = out_dir / "ratings.jsonl"
        grid = out_dir / "embedding.csv"
        counts = out_dir / "embedding_counts.csv"
        _claim_outputs([log, grid, counts], args.force)
        write_records(log, records)
        matrix = aggregate_matrix(records, tones, sentences,
                                  domain=cfg["experiment"]["experiment_id"])
        rating_matrix_to_csv(matrix, grid, counts)
        outputs = [log, grid, counts]
    elif stage == "similarity":
        plan = schedule_similarity_plan(tones, section["repeats"],
                                        session_size=section["session_size"],
                                        rng=plan_rng)
        rngs = _stage_rngs(stage, seed, len(plan))
        records = [
            SimilarityRecord(tone_a=a, tone_b=b,
                             rater_id=f"rater-{rater:04d}",
                             value=sim.judge(a, b, rng))
            for (a, b, rater), rng in zip(plan, rngs)
        ]
        log = out_dir / "similarity.jsonl"
        grid = out_dir / "similarity.csv"
        _claim_outputs([log, grid], args.force)
        write_records(log, records)
        similarity_matrix_to_csv(aggregate_similarity(records, tones), grid)
        outputs = [log, grid]
    else:
        from .agents import FEATURE_IDS
        slots = [(tone, feature, repeat)
                 for repeat in range(section["repeats"])
                 for tone in tones for feature in FEATURE_IDS]
        rngs = _stage_rngs(stage, seed, len(slots))
        records = [
            FeatureRecord(tone=tone, feature=feature,
                          rater_id=f"rater-{repeat:04d}",
                          value=feat.rate(tone, feature, rng))
            for (tone, feature, repeat), rng in zip(slots, rngs)
        ]
        log = out_dir / "features.jsonl"
        grid = out_dir / "features.csv"
        _claim_outputs([log, grid], args.force)
        write_records(log, records)
        feature_matrix_to_csv(aggregate_features(records, tones), grid)
        outputs = [log, grid]

    inputs = [out_dir / "trials.jsonl"]
    if getattr(args, "with_run", None):
        inputs.append(Path(args.with_run) / "trials.jsonl")
    write_manifest(out_dir, stage, cfg, seed, inputs=inputs, outputs=outputs,
                   started=started)
    print(f"{stage}: {len(records)} records over {len(tones)} tones -> {outputs[0]}")
    return 0


def cmd_rate(args) -> int:
    return _run_rating_stage(args, "rate")


def cmd_similarity(args) -> int:
    return _run_rating_stage(args, "similarity")


def cmd_features(args) -> int:
    return _run_rating_stage(args, "features")


# --------------------------------------------------------------------------
# analyze


def _parse_domain_specs(specs) -> list[tuple[str, Path]]:
    out = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise ConfigError(
                f"bad domain spec {spec!r}; expected name=run_dir")
        out.append((name, Path(path)))
    return out


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    specs = _parse_domain_specs(args.domains)
    seed = args.seed if args.seed is not None else cfg["experiment"]["rng_seed"]
    domains = []
    for name, run_dir in specs:
        for log, stage in (("ratings.jsonl", "rate"),
                           ("similarity.jsonl", "similarity"),
                           ("features.jsonl", "features")):
            _refuse_empty_log(run_dir / log, stage)
        domains.append(domain_data_from_run(run_dir, name))

    out_dir = Path(args.out or specs[0][1])
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    md_path = out_dir / "report.md"
    started = time.time()
    _claim_outputs([report_path, md_path], args.force)

    section = cfg["analysis"]
    doc = build_report(domains, n_boot=section["n_boot"],
                       mds_dim=section["mds_dim"],
                       taxonomy_k=section["taxonomy_k"],
                       top_tokens=section["top_tokens"], rng_seed=seed)
    write_report(doc, report_path)
    md_path.write_text(report_markdown(doc), encoding="utf-8")
    csv_paths = report_to_csvs(doc, out_dir / "csv")
    write_manifest(out_dir, "analyze", cfg, seed,
                   inputs=[p for _, p in specs],
                   outputs=[report_path, md_path] + csv_paths,
                   started=started)
    print(f"analyze: report over {len(domains)} domain(s) -> {report_path}")
    return 0


# --------------------------------------------------------------------------
# align


def _benchmark_inputs(args, seed: int):
    if args.fixture:
        ex, ey, truth = rotated_permuted_fixture(seed=seed)
        return ex, ey, truth, ["<fixture>"]
    if args.embedding_a and args.embedding_b and args.truth:
        _, labels_a, x = load_float_grid(args.embedding_a)
        _, labels_b, y = load_float_grid(args.embedding_b)
        truth_cols, truth_rows, truth = load_float_grid(args.truth)
        if truth_rows != labels_a or truth_cols != labels_b:
            raise InputError(
                "ground-truth rows/columns do not match the embedding labels")
        ex = EmbeddingSet(tuple(labels_a), x, domain="a")
        ey = EmbeddingSet(tuple(labels_b), y, domain="b")
        return ex, ey, truth, [args.embedding_a, args.embedding_b, args.truth]
    if args.run_a and args.run_b:
        inputs = []
        matrices = []
        for name, run in (("a", args.run_a), ("b", args.run_b)):
            grid = _require_stage_output(Path(run) / "embedding.csv", "rate")
            matrices.append(rating_matrix_from_csv(grid, domain=name))
            inputs.append(grid)
        truth = cross_correlation(matrices[0], matrices[1]).values
        ex = EmbeddingSet.from_rating_matrix(matrices[0])
        ey = EmbeddingSet.from_rating_matrix(matrices[1])
        return ex, ey, truth, inputs
    raise ConfigError(
        "align needs --fixture, or --embedding-a/--embedding-b/--truth, "
        "or --run-a/--run-b")


def cmd_align(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["experiment"]["rng_seed"]
    seeds = args.seeds or cfg["align"]["seeds"]
    ex, ey, truth, inputs = _benchmark_inputs(args, seed)

    out_dir = Path(args.out or "benchmark")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "benchmark.csv"
    json_path = out_dir / "benchmark.json"
    started = time.time()
    _claim_outputs([csv_path, json_path], args.force)
    report = run_benchmark(ex, ey, truth, seeds=seeds)
    benchmark_to_csv(report, csv_path)
    benchmark_to_json(report, json_path)
    write_manifest(out_dir, "align", cfg, seed, inputs=inputs,
                   outputs=[csv_path, json_path], started=started)
    for method in sorted(report.rows):
        mean, lo, hi = report.rows[method]["similarity_recovery"]
        print(f"align: {method:11s} similarity recovery "
              f"{mean:+.3f} [{lo:+.3f}, {hi:+.3f}]")
    if report.failed:
        print(f"align: {len(report.failed)} method/seed cell(s) failed; "
              f"see {json_path}")
    return 0


# --------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out or ".")
    report_path = out_dir / "report.json"
    doc = read_report(report_path)
    inputs = [report_path]
    started = time.time()
    if args.benchmark:
        bench_path = Path(args.benchmark)
        if not bench_path.exists():
            raise InputError(f"missing benchmark sidecar: {bench_path}")
        bench = json.loads(bench_path.read_text(encoding="utf-8"))
        doc = attach_benchmark(doc, bench)
        write_report(doc, report_path)
        inputs.append(bench_path)
    md_path = out_dir / "report.md"
    md_path.write_text(report_markdown(doc), encoding="utf-8")
    write_manifest(out_dir, "report", cfg,
                   cfg["experiment"]["rng_seed"], inputs=inputs,
                   outputs=[md_path], started=started)
    print(f"report: {md_path}")
    return 0


# --------------------------------------------------------------------------
# serve


def _check_port_free(host: str, port: int) -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise ToneLabError(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()


def _serve(cfg: dict, config: ExperimentConfig, args) -> int:
    import uvicorn
    if config.domain != "human":
        raise ConfigError(
            f"serve hosts human experiments; config backend is "
            f"{config.domain!r}")
    section = cfg["serve"]
    host = getattr(args, "host", None) or section["host"]
    port = getattr(args, "port", None) or section["port"]
    static_dir = getattr(args, "static", None) or section["static_dir"]
    state_dir = Path(args.out or f"runs/{config.experiment_id}")
    _check_port_free(host, port)
    app = build_service(config, state_dir, static_dir=static_dir)
    print(f"serve: {config.experiment_id} on http://{host}:{port} "
          f"(state in {state_dir})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_serve(args) -> int:
    cfg = load_config(args.config)
    config = experiment_config(cfg, args)
    return _serve(cfg, config, args)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tonelab",
        description="Conversational-tone elicitation and analysis pipeline.")
    parser.add_argument("--version", action="version",
                        version=f"tonelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the experiment seed")
        p.add_argument("--out", help="run directory")
        p.add_argument("--force", action="store_true",
                       help="overwrite existing stage outputs")
        return p

    p = common(sub.add_parser("elicit", help="run sampling chains"))
    p.add_argument("--backend", choices=("synthetic", "llm", "human"))
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--iters", type=int, help="iterations per chain")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--static", help="built web UI directory")
    p.set_defaults(func=cmd_elicit)

    for name, func in (("rate", cmd_rate), ("similarity", cmd_similarity),
                       ("features", cmd_features)):
        p = common(sub.add_parser(name, help=f"run the {name} stage"))
        p.add_argument("--backend", choices=("synthetic", "llm"),
                       default="synthetic")
        p.add_argument("--with", dest="with_run", metavar="RUN_DIR",
                       help="share the item set with another elicit run so "
                            "cross-domain analyses align")
        p.set_defaults(func=func)

    p = common(sub.add_parser("analyze", help="build the report document"))
    p.add_argument("domains", nargs="+", metavar="name=run_dir",
                   help="one or two domains, e.g. human=runs/human")
    p.set_defaults(func=cmd_analyze)

    p = common(sub.add_parser("align", help="benchmark alignment methods"))
    p.add_argument("--fixture", action="store_true",
                   help="run on the built-in rotated/permuted fixture")
    p.add_argument("--embedding-a")
    p.add_argument("--embedding-b")
    p.add_argument("--truth", help="ground-truth cross-correlation CSV")
    p.add_argument("--run-a", help="run directory for the first domain")
    p.add_argument("--run-b", help="run directory for the second domain")
    p.add_argument("--seeds", type=int, default=None,
                   help="stochastic-method restarts")
    p.set_defaults(func=cmd_align)

    p = common(sub.add_parser("report", help="render report.md, attach benchmark"))
    p.add_argument("--benchmark", help="benchmark.json to merge into the report")
    p.set_defaults(func=cmd_report)

    p = common(sub.add_parser("serve", help="host the human trial service"))
    p.add_argument("--backend", choices=("human",))
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--static", help="built web UI directory")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToneLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
