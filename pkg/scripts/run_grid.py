"""Run an experiment grid from a JSON config and print the table.

    python scripts/run_grid.py scripts/configs/trend_grid.json
"""

import argparse
import logging

from mtsp_ldp.experiments import GridConfig, run_grid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--out", help="override the output directory")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    config = GridConfig.from_json(args.config)
    if args.out:
        config.out = args.out
    rows = run_grid(config)
    print(f"{'method':6s} {'eps':>5s} {'w':>3s} {'count MAE':>10s} {'range MAE':>11s} {'AUC':>6s} {'pub':>5s}")
    for r in rows:
        print(f"{r['method']:6s} {r['epsilon']:5g} {r['w']:3d} {r['counting_mae']:10.1f} {r['range_mae']:11.1f} "
              f"{r['auc']:6.3f} {r['publication_fraction']:5.2f}")
    if config.out:
        print(f"wrote {config.out}/grid.csv")


if __name__ == "__main__":
    main()
