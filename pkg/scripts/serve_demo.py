#!/usr/bin/env python3
"""Host a small human-mode experiment on localhost.

Writes a two-chain demo config, then serves the trial API (and the web UI
if a built frontend is passed via --static). State persists under
--workdir, so stopping and restarting the server resumes open chains.
"""

import argparse
import json
import sys
from pathlib import Path

from tonelab.cli import main


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("runs/demo"))
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8321)
    parser.add_argument("--chains", type=int, default=2)
    parser.add_argument("--iterations", type=int, default=4)
    parser.add_argument("--static", default=None,
                        help="built frontend directory (frontend/dist)")
    return parser.parse_args()


def main_script() -> None:
    args = parse_args()
    args.workdir.mkdir(parents=True, exist_ok=True)
    config_path = args.workdir / "config.json"
    config_path.write_text(json.dumps({
        "experiment": {
            "experiment_id": "demo",
            "backend": {"kind": "human"},
            "n_chains": args.chains,
            "n_iterations": args.iterations,
            "trials_min": args.chains * args.iterations,
            "trials_max": args.chains * args.iterations + 10,
        },
        "serve": {"host": args.host, "port": args.port},
    }, indent=1) + "\n", encoding="utf-8")

    argv = ["serve", "--config", str(config_path),
            "--out", str(args.workdir / "state")]
    if args.static:
        argv += ["--static", args.static]
    print(f"serving on http://{args.host}:{args.port} "
          f"(state in {args.workdir / 'state'})")
    sys.exit(main(argv))


if __name__ == "__main__":
    main_script()
