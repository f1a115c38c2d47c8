#!/usr/bin/env python3
"""Run every experiment off one scenario file, each into its own directory.

Example:

    python scripts/run_pipeline.py --config configs/daily_backtest.yaml --out out/pipeline
"""

import argparse
import sys
from pathlib import Path

from futopt import load_config, run_experiment
from futopt.config import EXPERIMENTS


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True, help="scenario YAML")
    ap.add_argument("--out", default="out/pipeline", help="parent output directory")
    ap.add_argument("--paths", type=int, default=None, help="override mc.n_paths")
    args = ap.parse_args()

    worst = 0
    for name in EXPERIMENTS:
        cfg = load_config(args.config)
        cfg.experiment = name
        out = Path(args.out) / name.replace("-", "_")
        result = run_experiment(cfg, out_dir=out, n_paths=args.paths)
        for check in result.checks:
            mark = "ok" if check["passed"] else "FAIL"
            print(f"  [{mark}] {name}: {check['name']} {check.get('detail', '')}")
        print(f"{name}: status {result.status}, {len(result.artifacts)} artifacts -> {out}")
        worst = max(worst, result.status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
