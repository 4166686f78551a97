"""Run the bundled experiment configs through the CLI into one results directory.

    python3 scripts/run_experiments.py --out results [--only frontier skew] [--jobs 2]
"""
import argparse
import sys
import time
from pathlib import Path

from drae.cli import main as cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RUNS = {
    "frontier": "frontier_synthetic.json",
    "frontier_small": "frontier_synthetic_small.json",
    "skew": "skew.json",
    "states": "states_asset.json",
    "degree": "degree_ppm.json",
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="+", choices=sorted(RUNS), default=sorted(RUNS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    worst = 0
    for name in args.only:
        experiment = name.split("_")[0]
        t0 = time.perf_counter()
        code = cli(["experiment", experiment, "--config", str(CONFIGS / RUNS[name]), "--seed", str(args.seed),
                    "--jobs", str(args.jobs), "--out", str(Path(args.out) / name)])
        print(f"{name}: exit {code} in {time.perf_counter() - t0:.0f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
