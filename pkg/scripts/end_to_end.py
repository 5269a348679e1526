"""Counting-query MAE of every method on the mild-drift synthetic stream.

Splits the MTSP-LDP error into the warmup (t <= w) and steady-state parts,
which is where the gap to LSP comes from.

    python scripts/end_to_end.py --seeds 20
"""

import argparse

import numpy as np

from mtsp_ldp.domain import synthesize_stream
from mtsp_ldp.experiments import METHODS, counting_answers, exact_series, run_method


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--drift", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--window", type=int, default=20)
    args = p.parse_args()

    w = args.window
    rows = {m: [] for m in METHODS}
    for seed in range(args.seeds):
        ds = synthesize_stream({"d": args.d, "T": args.T, "n": args.n, "drift": args.drift, "seed": seed})
        truth = counting_answers(exact_series(ds))
        for m in METHODS:
            result = run_method(m, ds, args.epsilon, w, seed)
            err = np.abs(counting_answers(result.releases) - truth)
            rows[m].append((err.mean(), err[:w].mean(), err[w:].mean(), result.publication_fraction))
    print(f"{'method':6s} {'MAE':>9s} {'se':>7s} {'t<=w':>9s} {'t>w':>9s} {'pub':>5s}")
    for m, vals in rows.items():
        v = np.array(vals)
        se = v[:, 0].std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        print(f"{m:6s} {v[:, 0].mean():9.1f} {se:7.1f} {v[:, 1].mean():9.1f} {v[:, 2].mean():9.1f} {v[:, 3].mean():5.2f}")


if __name__ == "__main__":
    main()
