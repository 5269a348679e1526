"""Monitor AUC for MTSP-LDP and the baselines on two planted-event streams.

``volume``: ten surges in the number of active users, monitored on the whole
domain with lag w - 1 and the median threshold (the acceptance setting).
``subrange``: ten bumps of distribution mass onto values 8..15 at a constant
number of users, monitored on that sub-range with lag 5.

    python scripts/event_monitoring.py --task subrange --seeds 20
"""

import argparse

import numpy as np

from mtsp_ldp.domain import synthesize_stream
from mtsp_ldp.experiments import METHODS, EventTask, evaluate, exact_series, run_method


def volume_setup(w, n=50_000, surge=10_000):
    starts = [30 + 25 * i for i in range(10)]
    T = starts[-1] + 15
    ns = [n + (surge if any(s <= t < s + 5 for s in starts) else 0) for t in range(1, T + 1)]
    return {"d": 16, "T": T, "n": ns, "drift": 0.05}, EventTask((0, 15), 1, w - 1)


def subrange_setup(w, n=50_000, magnitude=0.1):
    cps = [{"t": 40 + 20 * i, "kind": "bump", "values": list(range(8, 16)), "magnitude": magnitude, "duration": 10}
           for i in range(10)]
    # label: the bump moved at least half of its expected mass into the range
    return ({"d": 16, "T": 240, "n": n, "drift": 0.05, "change_points": cps},
            EventTask((8, 15), 1, 5, threshold=0.25 * magnitude * n))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=["volume", "subrange"], default="volume")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--methods", nargs="+", default=list(METHODS))
    args = p.parse_args()

    spec, task = (volume_setup if args.task == "volume" else subrange_setup)(args.window)
    aucs = {m: [] for m in args.methods}
    for seed in range(args.seeds):
        ds = synthesize_stream({**spec, "seed": seed})
        truth = exact_series(ds)
        for m in args.methods:
            ev = evaluate(run_method(m, ds, args.epsilon, args.window, seed), ds, truth, None, task)
            aucs[m].append(ev.event.auc)
    for m, v in aucs.items():
        se = np.std(v, ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        print(f"{m:5s} AUC {np.mean(v):.3f} +- {se:.3f}")


if __name__ == "__main__":
    main()
