"""Factor-count selection sweep on simulated data with a known K.

Simulates the small two-condition network (true K = 3), fits the model
at several candidate factor counts, and prints AIC/BIC/DIC per K so the
elbow behavior is visible: the criteria should drop sharply up to the
true K and stay roughly flat beyond it.

Example:
    python scripts/run_k_selection.py --seeds 0 1 2 --n-times 250
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from bicnet import posthoc, simulate
from bicnet.sampler import FitConfig, Sampler


def sweep(seed, k_values, args):
    scenario = simulate.sparsity_benchmark_scenario(
        seed=seed,
        n_times=args.n_times,
        fractions=tuple([args.fraction] * args.subjects),
    )
    ds, _ = simulate.gen_dataset(scenario)
    rows = []
    for k in k_values:
        t0 = time.time()
        cfg = FitConfig(
            n_factors=k,
            n_iter=args.n_iter,
            burn_in=args.burn_in,
            seed=args.fit_seed + seed,
        )
        sampler = Sampler(ds, cfg)
        chain = sampler.run().chains[0]
        scores = sampler.selection_scores(chain)
        scores["k"] = k
        scores["seconds"] = time.time() - t0
        rows.append(scores)
        print(
            f"  K={k}: AIC {scores['aic']:>10.1f}  BIC {scores['bic']:>10.1f}"
            f"  DIC {scores['dic']:>10.1f}  p_eff {scores['p_eff']:>6.1f}"
            f"  ({scores['seconds']:.0f}s)"
        )
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-values", type=int, nargs="+", default=[2, 3, 4, 5])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--subjects", type=int, default=4)
    ap.add_argument("--fraction", type=float, default=0.8)
    ap.add_argument("--n-times", type=int, default=250)
    ap.add_argument("--n-iter", type=int, default=2500)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--fit-seed", type=int, default=500)
    ap.add_argument("--out", type=Path, default=None, help="optional JSON path")
    args = ap.parse_args(argv)

    all_rows = {}
    for seed in args.seeds:
        print(f"scenario seed {seed}:")
        rows = sweep(seed, args.k_values, args)
        picked = posthoc.pick_elbow(args.k_values, [r["aic"] for r in rows])
        print(f"  AIC arg-min elbow: K={picked}")
        all_rows[seed] = rows

    if args.out:
        args.out.write_text(json.dumps(all_rows, indent=2, default=float) + "\n")
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
