"""Command line entry point: ``run``, ``grid``, ``query`` and ``audit``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .allocation import LedgerEntry, audit_entries
from .domain import CsvSchema, SyntheticSpec, ingest_csv, synthesize_stream
from .experiments import GridConfig, METHODS, evaluate, exact_series, random_range_tasks, run_grid, run_method
from .queries import ReleaseSeries, run_query_file

DESK_SCALE_USERS = 100_000


def _load_dataset(args):
    if args.synthetic:
        return synthesize_stream(SyntheticSpec.from_json(args.synthetic))
    cap = None if args.full_scale else DESK_SCALE_USERS
    return ingest_csv(args.dataset, CsvSchema(args.ts_col, args.user_col, args.value_col),
                      max_users_per_timestamp=cap, seed=args.seed)


def cmd_run(args) -> int:
    dataset = _load_dataset(args)
    options = {}
    if args.method == "mtsp":
        options = {"exact_oba": args.exact_oba, "literal_alg1": args.literal_alg1,
                   "theta1": args.theta1, "theta2": args.theta2, "oracle": args.oracle}
    elif args.oracle != "oue":
        options = {"oracle": args.oracle}
    result = run_method(args.method, dataset, args.epsilon, args.window, args.seed, **options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.ledger.dump_jsonl(out / "ledger.jsonl")
    (out / "ledger_meta.json").write_text(json.dumps({"epsilon": str(result.ledger.epsilon), "w": result.ledger.w,
                                                      "method": args.method}))
    if args.dump_releases:
        result.releases.dump_jsonl(out / "releases.jsonl")
        exact_series(dataset).dump_jsonl(out / "truth.jsonl")
    ev = evaluate(result, dataset, tasks=random_range_tasks(dataset.domain.d, args.window, 50, args.seed))
    summary = {"method": args.method, "epsilon": args.epsilon, "w": args.window, "seed": args.seed,
               "T": dataset.length, "d": dataset.domain.d,
               "counting_mae": ev.counting.mae, "counting_mre": ev.counting.mre,
               "counting_mre_zero_truths": ev.counting.mre_zero_truths,
               "range_mae": ev.range.mae, "range_mre": ev.range.mre,
               "publication_fraction": ev.publication_fraction, "ledger_violations": ev.ledger_violations,
               "ms_per_timestamp": 1000 * sum(result.timing) / max(len(result.timing), 1)}
    (out / "run.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0 if ev.ledger_violations == 0 else 1


def cmd_grid(args) -> int:
    config = GridConfig.from_json(args.config)
    if args.out:
        config.out = args.out
    rows = run_grid(config)
    for row in rows:
        print(f"{row['method']:5s} eps={row['epsilon']:<5} w={row['w']:<3} counting_mae={row['counting_mae']:.4g} "
              f"range_mae={row['range_mae']:.4g} auc={row['auc']:.3f} violations={row['ledger_violations']}")
    return 0 if all(r["ledger_violations"] == 0 and not r["errors"] for r in rows) else 1


def cmd_query(args) -> int:
    root = Path(args.releases)
    series = ReleaseSeries.load_jsonl(root / "releases.jsonl")
    truth_path = root / "truth.jsonl"
    truth = ReleaseSeries.load_jsonl(truth_path) if truth_path.exists() else None
    queries = json.loads(Path(args.queries).read_text())
    out = Path(args.out) if args.out else root / "queries.csv"
    rows = run_query_file(series, queries, out, truth, clamp=args.clamp_output)
    print(f"answered {len(rows)} queries -> {out}")
    return 0


def cmd_audit(args) -> int:
    root = Path(args.ledger)
    path = root / "ledger.jsonl" if root.is_dir() else root
    meta_path = path.parent / "ledger_meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    epsilon = Fraction(args.epsilon) if args.epsilon else Fraction(meta["epsilon"])
    w = args.window or int(meta["w"])
    entries = [LedgerEntry.from_json(json.loads(line)) for line in path.read_text().splitlines() if line.strip()]
    violations = audit_entries(entries, epsilon, w)
    for t, spend in violations:
        print(f"VIOLATION window ending t={t}: spend {spend} ({float(spend):.6g}) > {epsilon}")
    print(f"audited {len(entries)} timestamps, w={w}, eps={epsilon}: {len(violations)} violations")
    return 1 if violations else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtsp-ldp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one method on one dataset")
    run.add_argument("--method", choices=METHODS, default="mtsp")
    run.add_argument("--epsilon", type=float, required=True)
    run.add_argument("--window", type=int, required=True)
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="CSV file")
    src.add_argument("--synthetic", help="synthetic stream spec (JSON)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--ts-col", default="timestamp")
    run.add_argument("--user-col", default="user_id")
    run.add_argument("--value-col", default="value")
    run.add_argument("--exact-oba", action="store_true", help="enumerate every k instead of stopping early")
    run.add_argument("--literal-alg1", action="store_true", help="route approximations through group smoothing")
    run.add_argument("--theta1", type=float, help="fixed pruning threshold")
    run.add_argument("--theta2", type=float, help="fixed grouping threshold")
    run.add_argument("--oracle", choices=["oue", "exact"], default="oue")
    run.add_argument("--dump-releases", action="store_true")
    run.add_argument("--full-scale", action="store_true", help=f"do not subsample to {DESK_SCALE_USERS} users per timestamp")
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("grid", help="run an experiment grid")
    grid.add_argument("--config", required=True)
    grid.add_argument("--out")
    grid.set_defaults(func=cmd_grid)

    query = sub.add_parser("query", help="answer a query batch from dumped releases")
    query.add_argument("--releases", required=True, help="run output directory with releases.jsonl")
    query.add_argument("--queries", required=True)
    query.add_argument("--out")
    query.add_argument("--clamp-output", action="store_true")
    query.set_defaults(func=cmd_query)

    audit = sub.add_parser("audit", help="check every window of a ledger dump")
    audit.add_argument("--ledger", required=True, help="run output directory or ledger.jsonl")
    audit.add_argument("--epsilon")
    audit.add_argument("--window", type=int)
    audit.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
