"""Per-seed downside AUC ratio and RAE LPM endpoints from a frontier CSV.

    python3 scripts/summarize_frontier.py results/frontier/frontier.csv
"""
import sys

import numpy as np

from drae.experiments import downside_auc_ratio, read_frontier_csv, split_by_concept


def main(path: str) -> None:
    rows = read_frontier_csv(path)
    ratios = []
    print("seed  auc_ratio  rae_lpm(min gamma)  rae_lpm(max gamma)  drae_area_sign")
    for seed in sorted({r.seed for r in rows}):
        fr = split_by_concept(rows, seed)
        ratio = downside_auc_ratio(fr["drae"], fr["rae"])
        rae = sorted(fr["rae"], key=lambda r: r.gamma)
        neg = "negative" if np.mean([r.lpm for r in fr["drae"]]) < 0 else "positive"
        print(f"{seed:4d}  {ratio:9.4f}  {rae[0].lpm:18.6g}  {rae[-1].lpm:18.6g}  {neg}")
        ratios.append(ratio)
    print(f"mean AUC ratio {np.mean(ratios):.4f} over {len(ratios)} seeds")


if __name__ == "__main__":
    main(sys.argv[1])
