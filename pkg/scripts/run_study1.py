"""Run the spatial-confounding simulation study and write a metric table.

    python3 scripts/run_study1.py --replicates 100 --out results/study1.csv
"""

import argparse
import time
from pathlib import Path

from carmap import io, mcmc, simstudy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--iterations", type=int, default=20_000)
    ap.add_argument("--scenarios", help="comma-separated names, e.g. D-sd0.01,A-sd0.01")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/study1.csv")
    args = ap.parse_args()

    config = mcmc.FitConfig(n_iterations=args.iterations, burn_in=args.iterations // 2)
    wanted = set(args.scenarios.split(",")) if args.scenarios else None
    records = []
    for sc in simstudy.study1_scenarios(replicates=args.replicates):
        if wanted and sc.name not in wanted:
            continue
        t0 = time.perf_counter()
        table = simstudy.run_study(sc, simstudy.STUDY1_MODELS, config, workers=args.workers)
        for r in table.records():
            print(f"{r['scenario']:10s} {r['model']:10s} bias {r['bias_pct']:7.2f}  "
                  f"rmse {r['rmse_pct']:7.2f}  coverage {r['coverage_pct']:5.1f}", flush=True)
        print(f"  ({time.perf_counter() - t0:.0f}s)", flush=True)
        records += table.records()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.write_metric_csv(args.out, records)


if __name__ == "__main__":
    main()
