"""Experiment runner: methods x epsilon x window x seed grids with query metrics."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import RUNNERS, BaselineConfig
from .domain import StreamDataset, SyntheticSpec, synthesize_stream
from .metrics import MetricReport, auc, mae, mre, roc_curve
from .pipeline import MtspConfig, RunResult, run_mtsp
from .queries import MonitorSpec, ReleaseSeries, monitor_statistics
from .tree import build_exact_tree, minimum_cover, node_index

log = logging.getLogger(__name__)

METHODS = ("mtsp", "lbu", "lsp", "lbd", "lba")


def run_method(method: str, dataset: StreamDataset, epsilon: float, w: int, seed: int = 0, **options) -> RunResult:
    if method == "mtsp":
        return run_mtsp(dataset, MtspConfig(epsilon=epsilon, w=w, seed=seed, **options))
    if method in RUNNERS:
        return RUNNERS[method](dataset, BaselineConfig(epsilon=epsilon, w=w, seed=seed, **options))
    raise ValueError(f"unknown method {method!r}")


def exact_series(dataset: StreamDataset) -> ReleaseSeries:
    return ReleaseSeries([build_exact_tree(b, dataset.domain) for b in dataset.batches], method="exact")


# ---------------------------------------------------------------------------
# Query tasks


@dataclass(frozen=True)
class RangeTask:
    v1: int
    v2: int
    delta: int


def random_range_tasks(d: int, max_delta: int, n_tasks: int = 50, seed: int = 0) -> list[RangeTask]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x52,)))
    tasks = []
    for _ in range(n_tasks):
        v1, v2 = sorted(rng.integers(0, d, size=2))
        tasks.append(RangeTask(int(v1), int(v2), int(rng.integers(1, max_delta + 1))))
    return tasks


def counting_answers(series: ReleaseSeries, start: int = 1) -> np.ndarray:
    """Counting answers with span 1 for every value and timestamp from ``start``: shape (T', d)."""
    d = series.domain.d
    leaf0 = node_index(series.domain.height, 0)
    return np.array([r.properties[leaf0:leaf0 + d] * r.n_active for r in series if r.timestamp >= start])


def range_answers(series: ReleaseSeries, task: RangeTask, start: int = 1) -> np.ndarray:
    cover = minimum_cover(series.domain, task.v1, task.v2)
    _, per_t = series.node_matrix([node_index(lv, i) for lv, i in cover])
    window = np.convolve(per_t, np.ones(task.delta), mode="valid")
    first = max(start, task.delta)
    return window[first - task.delta:]


@dataclass
class EventTask:
    """Monitor task: ``x = Q(t) - Q(t - lag)`` on a range; truth is ``x_exact > threshold``."""

    value_range: tuple[int, int]
    delta: int
    lag: int
    threshold: float | None = None  # None: median of the exact statistic

    def spec(self) -> MonitorSpec:
        return MonitorSpec(tuple(self.value_range), self.delta, self.lag)


def event_scores(series: ReleaseSeries, truth: ReleaseSeries, task: EventTask) -> tuple[np.ndarray, np.ndarray]:
    ts, x = monitor_statistics(series, task.spec())
    ts_true, x_true = monitor_statistics(truth, task.spec())
    assert np.array_equal(ts, ts_true)
    threshold = float(np.median(x_true)) if task.threshold is None else task.threshold
    return x, (x_true > threshold).astype(int)


@dataclass
class Evaluation:
    counting: MetricReport
    range: MetricReport
    event: MetricReport | None
    publication_fraction: float
    ledger_violations: int


def evaluate(result: RunResult, dataset: StreamDataset, truth: ReleaseSeries | None = None,
             tasks: list[RangeTask] | None = None, event: EventTask | None = None) -> Evaluation:
    truth = truth or exact_series(dataset)
    est_c, tru_c = counting_answers(result.releases), counting_answers(truth)
    counting = MetricReport(mae=mae(est_c, tru_c), n_queries=est_c.size)
    counting.mre, counting.mre_zero_truths = mre(est_c, tru_c)

    rng_report = MetricReport()
    if tasks:
        est_r = np.concatenate([range_answers(result.releases, task) for task in tasks])
        tru_r = np.concatenate([range_answers(truth, task) for task in tasks])
        rng_report = MetricReport(mae=mae(est_r, tru_r), n_queries=est_r.size)
        rng_report.mre, rng_report.mre_zero_truths = mre(est_r, tru_r)

    ev = None
    if event is not None:
        scores, labels = event_scores(result.releases, truth, event)
        if 0 < labels.sum() < labels.size:
            fpr, tpr = roc_curve(scores, labels)
            ev = MetricReport(fpr=fpr.tolist(), tpr=tpr.tolist(), auc=auc(fpr, tpr), n_queries=labels.size)
    counting.timing = list(result.timing)
    return Evaluation(counting, rng_report, ev, result.publication_fraction, len(result.ledger.audit()))


# ---------------------------------------------------------------------------
# Grids


@dataclass
class GridConfig:
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    epsilons: list[float] = field(default_factory=lambda: [1.0])
    windows: list[int] = field(default_factory=lambda: [20])
    seeds: list[int] = field(default_factory=lambda: [0])
    synthetic: dict | None = None
    dataset: str | None = None
    range_tasks: int = 50
    event: dict | None = None
    options: dict = field(default_factory=dict)
    out: str | None = None
    svg: bool = True

    @classmethod
    def from_json(cls, path: str | Path) -> "GridConfig":
        return cls(**json.loads(Path(path).read_text()))


GRID_COLUMNS = ["method", "epsilon", "w", "n_seeds", "counting_mae", "counting_mae_se", "counting_mre",
                "range_mae", "range_mae_se", "range_mre", "auc", "auc_se", "publication_fraction",
                "ledger_violations", "ms_per_timestamp", "errors"]


def _mean_se(values: list[float]) -> tuple[float, float]:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return float("nan"), float("nan")
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), se


def run_grid(config: GridConfig, dataset_factory=None) -> list[dict]:
    """Run every cell; a failing cell is reported in its row, not raised."""
    rows = []
    for w in config.windows:
        for eps in config.epsilons:
            for method in config.methods:
                evals, errors = [], []
                for seed in config.seeds:
                    try:
                        dataset = dataset_factory(seed) if dataset_factory else _grid_dataset(config, seed)
                        truth = exact_series(dataset)
                        tasks = random_range_tasks(dataset.domain.d, w, config.range_tasks, seed) if config.range_tasks else None
                        event = _event_task(config, dataset, w)
                        result = run_method(method, dataset, eps, w, seed, **config.options.get(method, {}))
                        evals.append(evaluate(result, dataset, truth, tasks, event))
                    except Exception as exc:  # isolate the cell
                        log.exception("cell %s eps=%s w=%s seed=%s failed", method, eps, w, seed)
                        errors.append(f"seed {seed}: {exc}")
                rows.append(_row(method, eps, w, evals, errors))
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "grid.csv", rows)
        if config.svg:
            write_grid_svgs(out, rows)
    return rows


def _grid_dataset(config: GridConfig, seed: int) -> StreamDataset:
    if config.synthetic is not None:
        return synthesize_stream(SyntheticSpec.from_dict({**config.synthetic, "seed": config.synthetic.get("seed", 0) + seed}))
    if config.dataset is not None:
        from .domain import ingest_csv
        return ingest_csv(config.dataset)
    raise ValueError("grid config needs a synthetic spec or a dataset path")


def _event_task(config: GridConfig, dataset: StreamDataset, w: int) -> EventTask | None:
    if config.event is None:
        return None
    ev = dict(config.event)
    rng_ = ev.pop("value_range", [0, dataset.domain.d - 1])
    return EventTask(tuple(rng_), ev.pop("delta", 1), ev.pop("lag", max(w - 1, 1)), ev.pop("threshold", None))


def _row(method, eps, w, evals: list[Evaluation], errors: list[str]) -> dict:
    c_mae, c_se = _mean_se([e.counting.mae for e in evals])
    r_mae, r_se = _mean_se([e.range.mae for e in evals])
    a, a_se = _mean_se([e.event.auc for e in evals if e.event is not None])
    timing = [np.mean(e.counting.timing) * 1000 for e in evals if e.counting.timing]
    return {"method": method, "epsilon": eps, "w": w, "n_seeds": len(evals),
            "counting_mae": c_mae, "counting_mae_se": c_se, "counting_mre": _mean_se([e.counting.mre for e in evals])[0],
            "range_mae": r_mae, "range_mae_se": r_se, "range_mre": _mean_se([e.range.mre for e in evals])[0],
            "auc": a, "auc_se": a_se, "publication_fraction": _mean_se([e.publication_fraction for e in evals])[0],
            "ledger_violations": sum(e.ledger_violations for e in evals),
            "ms_per_timestamp": float(np.mean(timing)) if timing else float("nan"), "errors": "; ".join(errors)}


def write_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or (GRID_COLUMNS if rows and set(GRID_COLUMNS) <= set(rows[0]) else list(rows[0]) if rows else [])
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Plots


def line_chart_svg(lines: dict[str, list[tuple[float, float]]], title: str = "", xlabel: str = "",
                   ylabel: str = "", logy: bool = False, width: int = 480, height: int = 320) -> str:
    """Minimal standalone SVG line chart."""
    pad = 50
    pts = [(x, y) for line in lines.values() for x, y in line if y is not None and math.isfinite(y) and (y > 0 or not logy)]
    if not pts:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>'
    fy = (lambda y: math.log10(y)) if logy else (lambda y: y)
    xs = [p[0] for p in pts]
    ys = [fy(p[1]) for p in pts]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (fy(y) - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
             f'<text x="{width / 2}" y="16" text-anchor="middle">{title}</text>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
             f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" text-anchor="middle">{ylabel}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#888"/>']
    for j, (name, line) in enumerate(lines.items()):
        good = [(x, y) for x, y in line if y is not None and math.isfinite(y) and (y > 0 or not logy)]
        color = colors[j % len(colors)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in good)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 12 * j}" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_grid_svgs(out: Path, rows: list[dict]) -> None:
    methods = sorted({r["method"] for r in rows})
    for metric in ("counting_mae", "range_mae"):
        for w in sorted({r["w"] for r in rows}):
            lines = {m: [(r["epsilon"], r[metric]) for r in rows if r["method"] == m and r["w"] == w] for m in methods}
            (out / f"{metric}_w{w}.svg").write_text(line_chart_svg(lines, f"{metric} (w={w})", "epsilon", metric, logy=True))
        for eps in sorted({r["epsilon"] for r in rows}):
            lines = {m: [(r["w"], r[metric]) for r in rows if r["method"] == m and r["epsilon"] == eps] for m in methods}
            (out / f"{metric}_eps{eps}.svg").write_text(line_chart_svg(lines, f"{metric} (eps={eps})", "w", metric, logy=True))


def write_roc(path: str | Path, curves: dict[str, tuple[list[float], list[float]]]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "fpr", "tpr"])
        for name, (fpr, tpr) in curves.items():
            writer.writerows([name, f, t] for f, t in zip(fpr, tpr))
