"""Counting, range and event-monitoring queries over a series of released trees.

Nothing here touches raw batches or budgets: every answer is computed from
releases alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import QueryError
from .tree import PrivateTree, minimum_cover, node_index


class ReleaseSeries:
    """Releases keyed by timestamp, appended in order without gaps."""

    def __init__(self, releases: list[PrivateTree] | None = None, method: str = ""):
        self.method = method
        self._releases: dict[int, PrivateTree] = {}
        for r in releases or []:
            self.append(r)

    def append(self, release: PrivateTree) -> None:
        if self._releases and release.timestamp != self.last_t + 1:
            raise ValueError(f"release at t={release.timestamp} does not follow t={self.last_t}")
        self._releases[release.timestamp] = release

    @property
    def first_t(self) -> int:
        return min(self._releases)

    @property
    def last_t(self) -> int:
        return max(self._releases)

    def __len__(self) -> int:
        return len(self._releases)

    def __getitem__(self, t: int) -> PrivateTree:
        return self._releases[t]

    def __iter__(self):
        return (self._releases[t] for t in sorted(self._releases))

    @property
    def domain(self):
        return next(iter(self._releases.values())).domain

    def span(self, t: int, delta: int) -> list[PrivateTree]:
        wanted = range(t - delta + 1, t + 1)
        missing = [s for s in wanted if s not in self._releases]
        if missing:
            raise QueryError(f"no releases for timestamps {missing}", missing)
        return [self._releases[s] for s in wanted]

    def node_matrix(self, nodes: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """(timestamps, per-timestamp sum over ``nodes`` times n_t) for fast sweeps."""
        ts = np.array(sorted(self._releases))
        vals = np.array([self._releases[t].properties[nodes].sum() * self._releases[t].n_active for t in ts])
        return ts, vals

    def dump_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for r in self:
                fh.write(json.dumps(r.to_json(), default=_jsonable) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path, method: str = "") -> "ReleaseSeries":
        with Path(path).open() as fh:
            return cls([PrivateTree.from_json(json.loads(line)) for line in fh if line.strip()], method)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def _check_delta(delta: int, w: int | None) -> None:
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if w is not None and delta > w:
        raise ValueError(f"delta={delta} exceeds the window w={w}")


def _sum_nodes(series: ReleaseSeries, cover: list[tuple[int, int]], delta: int, t: int, clamp: bool) -> float:
    idx = [node_index(level, i) for level, i in cover]
    total = sum(float(r.properties[idx].sum()) * r.n_active for r in series.span(t, delta))
    return max(total, 0.0) if clamp else total


def counting_query(series: ReleaseSeries, v: int, delta: int, t: int, w: int | None = None, clamp: bool = False) -> float:
    """Estimated number of reports of value ``v`` over the last ``delta`` timestamps."""
    _check_delta(delta, w)
    domain = series.domain
    if not 0 <= v < domain.d:
        raise ValueError(f"value {v} outside 0..{domain.d - 1}")
    return _sum_nodes(series, [(domain.height, v)], delta, t, clamp)


def range_query(series: ReleaseSeries, value_range: tuple[int, int], delta: int, t: int,
                w: int | None = None, clamp: bool = False) -> float:
    """Estimated number of reports in ``[v1, v2]`` over the last ``delta`` timestamps."""
    _check_delta(delta, w)
    v1, v2 = value_range
    return _sum_nodes(series, minimum_cover(series.domain, v1, v2), delta, t, clamp)


@dataclass(frozen=True)
class MonitorSpec:
    """Differencing monitor ``x = Q(t) - Q(t - lag)`` on a counting or range base query."""

    value_range: tuple[int, int]
    delta: int
    lag: int
    threshold: float = 0.0

    def __post_init__(self):
        if self.delta < 1 or self.lag < 1:
            raise ValueError("delta and lag must be positive")

    @classmethod
    def counting(cls, v: int, delta: int, lag: int, threshold: float = 0.0) -> "MonitorSpec":
        return cls((v, v), delta, lag, threshold)

    @classmethod
    def for_window(cls, value_range: tuple[int, int], w: int, delta: int = 1, threshold: float = 0.0) -> "MonitorSpec":
        return cls(tuple(value_range), delta, max(w - 1, 1), threshold)


@dataclass(frozen=True)
class MonitorResult:
    ready: bool
    signal: int | None = None
    statistic: float | None = None


NOT_READY = MonitorResult(False)


def monitor(series: ReleaseSeries, spec: MonitorSpec, t: int, w: int | None = None) -> MonitorResult:
    if w is not None and spec.delta > w:
        raise ValueError(f"delta={spec.delta} exceeds the window w={w}")
    try:
        now = range_query(series, spec.value_range, spec.delta, t)
        before = range_query(series, spec.value_range, spec.delta, t - spec.lag)
    except QueryError:
        return NOT_READY
    x = now - before
    return MonitorResult(True, int(x > spec.threshold), x)


def monitor_statistics(series: ReleaseSeries, spec: MonitorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Monitor statistic at every ready timestamp: (timestamps, x)."""
    cover = minimum_cover(series.domain, *spec.value_range)
    ts, per_t = series.node_matrix([node_index(lv, i) for lv, i in cover])
    window = np.convolve(per_t, np.ones(spec.delta), mode="valid")  # window[j] = sum over ts[j .. j+delta-1]
    ends = ts[spec.delta - 1:]
    if len(window) <= spec.lag:
        return np.array([], dtype=int), np.array([])
    return ends[spec.lag:], window[spec.lag:] - window[:-spec.lag]


# ---------------------------------------------------------------------------
# Query batch files


def answer(series: ReleaseSeries, query: dict, w: int | None = None, clamp: bool = False):
    """Answer one ``{type, params, t}`` query dict."""
    kind, params, t = query["type"], query.get("params", {}), int(query["t"])
    delta = int(params.get("delta", 1))
    if kind == "counting":
        return counting_query(series, int(params["v"]), delta, t, w, clamp)
    if kind == "range":
        return range_query(series, (int(params["v1"]), int(params["v2"])), delta, t, w, clamp)
    if kind == "monitor":
        spec = MonitorSpec((int(params["v1"]), int(params["v2"])), delta, int(params["lag"]), float(params.get("threshold", 0.0)))
        res = monitor(series, spec, t, w)
        return res.statistic if res.ready else None
    raise ValueError(f"unknown query type {kind!r}")


def run_query_file(series: ReleaseSeries, queries: list[dict], out: str | Path, truth: ReleaseSeries | None = None,
                   w: int | None = None, clamp: bool = False) -> list[dict]:
    """Answer a query batch and write ``query_id, estimate, ground_truth, abs_err, rel_err`` rows."""
    rows = []
    for qid, q in enumerate(queries):
        est = answer(series, q, w, clamp)
        row = {"query_id": q.get("id", qid), "estimate": est, "ground_truth": "", "abs_err": "", "rel_err": ""}
        if truth is not None:
            gt = answer(truth, q)
            row["ground_truth"] = gt
            if est is not None and gt is not None:
                row["abs_err"] = abs(est - gt)
                row["rel_err"] = abs(est - gt) / abs(gt) if gt else ""
        rows.append(row)
    with Path(out).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["query_id", "estimate", "ground_truth", "abs_err", "rel_err"])
        writer.writeheader()
        writer.writerows(rows)
    return rows
