#!/usr/bin/env python3
"""Two-domain synthetic pipeline, end to end, through the command line.

Both domains sample the same planted joint with different seeds, stand in
for a human and a model population, rate a shared item grid, and meet in
one report plus an alignment benchmark. Everything lands under --workdir.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from tonelab.agents import SyntheticJoint, default_sentence_pool
from tonelab.cli import main
from tonelab.validation import default_seed_tones


def run(argv: list[str]) -> None:
    print("$ tonelab " + " ".join(argv))
    code = main(argv)
    if code != 0:
        sys.exit(code)


def build_config(workdir: Path, args) -> Path:
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    joint = SyntheticJoint.random(default_seed_tones()[: args.tones],
                                  default_sentence_pool()[: args.sentences],
                                  rng)
    config = {
        "experiment": {
            "n_chains": args.chains,
            "n_iterations": args.iterations,
            "trials_min": args.chains * args.iterations,
            "trials_max": args.chains * args.iterations + 4,
        },
        "synthetic": {"joint": joint.to_dict()},
        "rating": {"repeats": 2, "top_k_tones": args.tones,
                   "max_sentences": 2 * args.sentences},
        "similarity": {"repeats": 2},
        "features": {"repeats": 2},
        "analysis": {"n_boot": args.n_boot},
        "align": {"seeds": args.align_seeds},
    }
    path = workdir / "config.json"
    path.write_text(json.dumps(config, indent=1) + "\n", encoding="utf-8")
    return path


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("runs/pipeline"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--chains", type=int, default=4)
    parser.add_argument("--iterations", type=int, default=12)
    parser.add_argument("--tones", type=int, default=6)
    parser.add_argument("--sentences", type=int, default=10)
    parser.add_argument("--n-boot", type=int, default=200)
    parser.add_argument("--align-seeds", type=int, default=20)
    return parser.parse_args()


def main_script() -> None:
    args = parse_args()
    workdir = args.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    config = build_config(workdir, args)

    run_a = workdir / "domain-a"
    run_b = workdir / "domain-b"
    common = ["--config", str(config), "--force"]

    run(["elicit", *common, "--seed", str(args.seed), "--out", str(run_a)])
    run(["elicit", *common, "--seed", str(args.seed + 1), "--out", str(run_b)])
    for stage in ("rate", "similarity", "features"):
        run([stage, *common, "--seed", str(args.seed),
             "--out", str(run_a), "--with", str(run_b)])
        run([stage, *common, "--seed", str(args.seed + 1),
             "--out", str(run_b), "--with", str(run_a)])

    analysis = workdir / "analysis"
    run(["analyze", *common, "--seed", str(args.seed),
         f"domain-a={run_a}", f"domain-b={run_b}", "--out", str(analysis)])
    bench = workdir / "benchmark"
    run(["align", *common, "--seed", str(args.seed),
         "--run-a", str(run_a), "--run-b", str(run_b), "--out", str(bench)])
    run(["report", *common, "--out", str(analysis),
         "--benchmark", str(bench / "benchmark.json")])

    print(f"\nreport: {analysis / 'report.md'}")


if __name__ == "__main__":
    main_script()
