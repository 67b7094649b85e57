"""Pipeline commands: stage outputs, determinism, DAG errors, exit codes."""

import json
import socket

import numpy as np
import pytest

from tonelab.agents import SyntheticJoint, default_sentence_pool
from tonelab.cli import (DEFAULT_CONFIG, config_hash, load_config, main)
from tonelab.core import ConfigError
from tonelab.ratings import read_records
from tonelab.report import read_report
from tonelab.validation import default_seed_tones


@pytest.fixture
def config_path(tmp_path):
    """Small shared-joint config so two elicit runs can rate one grid."""
    joint = SyntheticJoint.random(default_seed_tones()[:5],
                                  default_sentence_pool()[:8],
                                  np.random.default_rng(99))
    cfg = {
        "experiment": {"experiment_id": "t", "n_chains": 2, "n_iterations": 4},
        "synthetic": {"joint": joint.to_dict()},
        "rating": {"repeats": 2, "session_size": 50, "top_k_tones": 10,
                   "max_sentences": 20},
        "analysis": {"n_boot": 30},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def elicit(config_path, out, seed=11, extra=()):
    return main(["elicit", "--config", str(config_path), "--backend",
                 "synthetic", "--seed", str(seed), "--out", str(out), *extra])


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg == DEFAULT_CONFIG
        assert cfg is not DEFAULT_CONFIG  # caller-mutable copy

    def test_merges_section_by_section(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"experiment": {"n_chains": 9}}', encoding="utf-8")
        cfg = load_config(path)
        assert cfg["experiment"]["n_chains"] == 9
        assert cfg["experiment"]["n_iterations"] == \
            DEFAULT_CONFIG["experiment"]["n_iterations"]

    def test_rejects_unknown_section_and_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"experimnt": {}}', encoding="utf-8")
        with pytest.raises(ConfigError, match="experimnt"):
            load_config(path)
        path.write_text('{"experiment": {"chains": 4}}', encoding="utf-8")
        with pytest.raises(ConfigError, match="chains"):
            load_config(path)

    def test_rejects_missing_or_malformed_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError, match="unreadable"):
            load_config(bad)
        listing = tmp_path / "list.json"
        listing.write_text("[1]", encoding="utf-8")
        with pytest.raises(ConfigError, match="object"):
            load_config(listing)

    def test_hash_tracks_content(self):
        a = load_config(None)
        b = load_config(None)
        assert config_hash(a) == config_hash(b)
        b["experiment"]["rng_seed"] = 1
        assert config_hash(a) != config_hash(b)


class TestElicit:
    def test_writes_all_stage_outputs(self, tmp_path, config_path):
        out = tmp_path / "run"
        assert elicit(config_path, out) == 0
        for name in ("trials.jsonl", "state.json", "joint.json",
                     "manifest-elicit.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest-elicit.json").read_text())
        assert manifest["stage"] == "elicit"
        assert manifest["rng_seed"] == 11
        assert manifest["finished_at"] >= manifest["started_at"]

    def test_accepted_trials_cover_all_iterations(self, tmp_path, config_path):
        out = tmp_path / "run"
        elicit(config_path, out)
        accepted = [json.loads(line)
                    for line in (out / "trials.jsonl").read_text().splitlines()
                    if json.loads(line)["status"] == "accepted"]
        assert len(accepted) == 2 * 4

    def test_refuses_rerun_without_force(self, tmp_path, config_path, capsys):
        out = tmp_path / "run"
        elicit(config_path, out)
        assert elicit(config_path, out) == 3
        assert "--force" in capsys.readouterr().err

    def test_forced_rerun_is_byte_identical(self, tmp_path, config_path):
        out = tmp_path / "run"
        elicit(config_path, out)
        first = (out / "trials.jsonl").read_bytes()
        assert elicit(config_path, out, extra=("--force",)) == 0
        assert (out / "trials.jsonl").read_bytes() == first

    def test_different_seed_changes_log(self, tmp_path, config_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        elicit(config_path, out_a, seed=11)
        elicit(config_path, out_b, seed=12)
        assert (out_a / "trials.jsonl").read_bytes() != \
            (out_b / "trials.jsonl").read_bytes()

    def test_llm_backend_requires_auth_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("TONELAB_API_KEY", raising=False)
        cfg = tmp_path / "llm.json"
        cfg.write_text(json.dumps(
            {"llm": {"model": "m", "endpoint": "http://localhost/v1"}}),
            encoding="utf-8")
        code = main(["elicit", "--config", str(cfg), "--backend", "llm",
                     "--out", str(tmp_path / "run")])
        assert code == 2
        assert "TONELAB_API_KEY" in capsys.readouterr().err

    def test_llm_backend_requires_model_and_endpoint(self, tmp_path, capsys):
        code = main(["elicit", "--backend", "llm", "--out", str(tmp_path / "r")])
        assert code == 2
        assert "llm.model" in capsys.readouterr().err


class TestRatingStages:
    def test_requires_elicit_first(self, tmp_path, capsys):
        code = main(["rate", "--out", str(tmp_path / "void")])
        assert code == 3
        assert "elicit stage" in capsys.readouterr().err

    def test_rate_outputs_and_determinism(self, tmp_path, config_path):
        out = tmp_path / "run"
        elicit(config_path, out)
        argv = ["rate", "--config", str(config_path), "--out", str(out),
                "--seed", "21"]
        assert main(argv) == 0
        records = read_records(out / "ratings.jsonl")
        assert records
        assert (out / "embedding.csv").exists()
        assert (out / "embedding_counts.csv").exists()
        first = (out / "ratings.jsonl").read_bytes()
        assert main(argv) == 3  # refuses without --force
        assert main(argv + ["--force"]) == 0
        assert (out / "ratings.jsonl").read_bytes() == first

    def test_similarity_and_features_outputs(self, tmp_path, config_path):
        out = tmp_path / "run"
        elicit(config_path, out)
        assert main(["similarity", "--config", str(config_path),
                     "--out", str(out), "--seed", "22"]) == 0
        assert main(["features", "--config", str(config_path),
                     "--out", str(out), "--seed", "23"]) == 0
        assert read_records(out / "similarity.jsonl")
        assert read_records(out / "features.jsonl")
        assert (out / "similarity.csv").exists()
        assert (out / "features.csv").exists()

    def test_with_flag_builds_one_shared_grid(self, tmp_path, config_path):
        run_a, run_b = tmp_path / "a", tmp_path / "b"
        elicit(config_path, run_a, seed=11)
        elicit(config_path, run_b, seed=12)
        for run, other in ((run_a, run_b), (run_b, run_a)):
            assert main(["rate", "--config", str(config_path), "--out",
                         str(run), "--with", str(other), "--seed", "21"]) == 0
        header_a = (run_a / "embedding.csv").read_text().splitlines()[0]
        header_b = (run_b / "embedding.csv").read_text().splitlines()[0]
        assert header_a == header_b
        tones_a = [l.split(",")[0] for l in
                   (run_a / "embedding.csv").read_text().splitlines()[1:]]
        tones_b = [l.split(",")[0] for l in
                   (run_b / "embedding.csv").read_text().splitlines()[1:]]
        assert tones_a == tones_b


@pytest.fixture
def rated_run(tmp_path, config_path):
    out = tmp_path / "run"
    elicit(config_path, out)
    for stage, seed in (("rate", 21), ("similarity", 22), ("features", 23)):
        assert main([stage, "--config", str(config_path), "--out", str(out),
                     "--seed", str(seed)]) == 0
    return out


class TestAnalyze:
    def test_single_domain_report(self, tmp_path, config_path, rated_run):
        out = tmp_path / "analysis"
        code = main(["analyze", f"demo={rated_run}", "--config",
                     str(config_path), "--out", str(out), "--seed", "31"])
        assert code == 0
        doc = read_report(out / "report.json")  # validates against the schema
        assert "demo" in doc["domains"]
        assert (out / "report.md").exists()
        assert (out / "csv" / "histogram_demo.csv").exists()
        assert (out / "manifest-analyze.json").exists()

    def test_rerun_is_byte_identical(self, tmp_path, config_path, rated_run):
        out = tmp_path / "analysis"
        argv = ["analyze", f"demo={rated_run}", "--config", str(config_path),
                "--out", str(out), "--seed", "31"]
        assert main(argv) == 0
        first = (out / "report.json").read_bytes()
        assert main(argv + ["--force"]) == 0
        assert (out / "report.json").read_bytes() == first

    def test_bad_domain_spec(self, tmp_path, capsys):
        assert main(["analyze", "no-equals-sign", "--out", str(tmp_path)]) == 2
        assert "name=run_dir" in capsys.readouterr().err

    def test_missing_run_names_elicit(self, tmp_path, capsys):
        code = main(["analyze", f"x={tmp_path / 'void'}",
                     "--out", str(tmp_path / "a")])
        assert code == 3
        assert "elicit" in capsys.readouterr().err

    def test_empty_rating_log_names_rate_stage(self, tmp_path, config_path,
                                               capsys):
        out = tmp_path / "run"
        elicit(config_path, out)
        (out / "ratings.jsonl").write_text("", encoding="utf-8")
        code = main(["analyze", f"x={out}", "--out", str(tmp_path / "a")])
        assert code == 3
        assert "rate stage" in capsys.readouterr().err


class TestAlign:
    def test_fixture_mode_writes_benchmark(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["align", "--fixture", "--seeds", "3", "--seed", "4",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "benchmark.json").read_text())
        assert set(doc["rows"]) >= {"procrustes", "bli", "random"}
        header = (out / "benchmark.csv").read_text().splitlines()[0]
        assert header == "method,metric,mean,ci_low,ci_high"

    def test_fixture_mode_is_deterministic(self, tmp_path):
        outs = []
        for name in ("b1", "b2"):
            out = tmp_path / name
            assert main(["align", "--fixture", "--seeds", "3", "--seed", "4",
                         "--out", str(out)]) == 0
            outs.append((out / "benchmark.json").read_bytes())
        assert outs[0] == outs[1]

    def test_needs_an_input_mode(self, tmp_path, capsys):
        assert main(["align", "--out", str(tmp_path / "b")]) == 2
        assert "--fixture" in capsys.readouterr().err

    def test_malformed_csv_names_first_bad_cell(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("tone,s1,s2\ncalm,1.0,oops\n", encoding="utf-8")
        code = main(["align", "--embedding-a", str(bad), "--embedding-b",
                     str(bad), "--truth", str(bad), "--out", str(tmp_path / "b")])
        assert code == 3
        err = capsys.readouterr().err
        assert "line 2" in err and "'s2'" in err and "oops" in err

    def test_ragged_row_is_located(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("tone,s1,s2\ncalm,1.0\n", encoding="utf-8")
        code = main(["align", "--embedding-a", str(bad), "--embedding-b",
                     str(bad), "--truth", str(bad), "--out", str(tmp_path / "b")])
        assert code == 3
        assert "line 2" in capsys.readouterr().err

    def test_truth_labels_must_match_embeddings(self, tmp_path, capsys):
        emb = tmp_path / "e.csv"
        emb.write_text("tone,s1,s2\ncalm,1.0,2.0\nangry,0.5,1.5\n",
                       encoding="utf-8")
        truth = tmp_path / "t.csv"
        truth.write_text("tone,calm,angry\nwarm,1.0,0.0\nangry,0.0,1.0\n",
                         encoding="utf-8")
        code = main(["align", "--embedding-a", str(emb), "--embedding-b",
                     str(emb), "--truth", str(truth),
                     "--out", str(tmp_path / "b")])
        assert code == 3
        assert "do not match" in capsys.readouterr().err

    def test_run_mode_uses_shared_grid(self, tmp_path, config_path):
        run_a, run_b = tmp_path / "a", tmp_path / "b"
        elicit(config_path, run_a, seed=11)
        elicit(config_path, run_b, seed=12)
        for run, other in ((run_a, run_b), (run_b, run_a)):
            main(["rate", "--config", str(config_path), "--out", str(run),
                  "--with", str(other), "--seed", "21"])
        out = tmp_path / "bench"
        code = main(["align", "--run-a", str(run_a), "--run-b", str(run_b),
                     "--seeds", "2", "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "benchmark.json").read_text())
        assert "procrustes" in doc["rows"]


class TestReportCommand:
    def test_attaches_benchmark_and_renders(self, tmp_path, config_path,
                                            rated_run):
        analysis = tmp_path / "analysis"
        main(["analyze", f"demo={rated_run}", "--config", str(config_path),
              "--out", str(analysis), "--seed", "31"])
        bench = tmp_path / "bench"
        main(["align", "--fixture", "--seeds", "2", "--seed", "4",
              "--out", str(bench)])
        code = main(["report", "--out", str(analysis), "--benchmark",
                     str(bench / "benchmark.json")])
        assert code == 0
        doc = read_report(analysis / "report.json")
        assert doc["benchmark"]["seeds"] == 2
        assert "Alignment benchmark" in (analysis / "report.md").read_text()

    def test_missing_report_names_analyze(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path)]) == 3
        assert "analyze" in capsys.readouterr().err


class TestServe:
    def test_rejects_non_human_backend(self, tmp_path, capsys):
        code = main(["serve", "--out", str(tmp_path / "s")])
        assert code == 2
        assert "human" in capsys.readouterr().err

    def test_port_in_use_is_runtime_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(
            {"experiment": {"backend": {"kind": "human"}}}), encoding="utf-8")
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            code = main(["serve", "--config", str(cfg), "--out",
                         str(tmp_path / "s"), "--port", str(port)])
        finally:
            blocker.close()
        assert code == 4
        assert str(port) in capsys.readouterr().err
