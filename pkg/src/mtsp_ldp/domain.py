"""Value domain, stream data model, CSV ingestion and synthetic streams.

A stream is a sequence of batches, one per discrete timestamp. Each batch holds
the value index reported by every active user at that timestamp. Value indices
live in ``0..d-1``; the tree layer pads the domain up to a power of two and the
padding indices are never reported.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, IngestError


@dataclass(frozen=True)
class ValueDomain:
    """Raw domain of size ``d`` padded to the next power of two."""

    d: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigError(f"domain size must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def padded_size(self) -> int:
        return 1 << (self.d - 1).bit_length()

    @property
    def height(self) -> int:
        return (self.d - 1).bit_length()

    @property
    def levels(self) -> int:
        return self.height + 1

    @property
    def n_nodes(self) -> int:
        return 2 * self.padded_size - 1


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StreamBatch:
    """All reports at one timestamp.

    ``user_ids`` and ``values`` are parallel arrays; each user appears at most
    once. Arrays are made read-only on construction.
    """

    t: int
    user_ids: np.ndarray
    values: np.ndarray
    d: int

    def __post_init__(self):
        values = _frozen(self.values, np.int64)
        user_ids = np.asarray(self.user_ids)
        if user_ids.shape != values.shape:
            raise ValueError("user_ids and values must have the same length")
        if values.size:
            if values.min() < 0 or values.max() >= self.d:
                raise ValueError(f"batch t={self.t}: value index outside 0..{self.d - 1}")
            if np.unique(user_ids).size != user_ids.size:
                raise ValueError(f"batch t={self.t}: duplicate user id")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "user_ids", _frozen(user_ids, user_ids.dtype))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def counts(self, size: int | None = None) -> np.ndarray:
        """Per-value counts, zero-padded to ``size`` (default ``d``)."""
        return np.bincount(self.values, minlength=size or self.d)

    @property
    def reports(self) -> list[tuple[Any, int]]:
        return list(zip(self.user_ids.tolist(), self.values.tolist()))


class HistogramBasis(enum.Enum):
    TRUE_COUNTS = "true_counts"
    ESTIMATED_FREQUENCIES = "estimated_frequencies"


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    basis: HistogramBasis = HistogramBasis.TRUE_COUNTS

    @classmethod
    def of_batch(cls, batch: StreamBatch, domain: ValueDomain) -> "Histogram":
        return cls(_frozen(batch.counts(domain.padded_size), np.float64))

    @property
    def n(self) -> int:
        return int(round(float(self.counts.sum())))


@dataclass(frozen=True)
class StreamDataset:
    """A materialized stream with contiguous timestamps ``1..length``.

    ``distributions`` is the per-timestamp generating distribution for synthetic
    streams (shape ``(length, d)``) and ``None`` for ingested data.
    ``labels`` maps raw values to indices for ingested data.
    """

    domain: ValueDomain
    batches: tuple[StreamBatch, ...]
    distributions: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "batches", tuple(self.batches))
        for i, b in enumerate(self.batches, start=1):
            if b.t != i:
                raise ValueError(f"batch timestamps must be contiguous from 1; got {b.t} at position {i}")
            if b.d != self.domain.d:
                raise ValueError("batch domain does not match dataset domain")

    @property
    def length(self) -> int:
        return len(self.batches)

    def batch(self, t: int) -> StreamBatch:
        return self.batches[t - 1]

    def n_active(self) -> np.ndarray:
        return np.array([b.n for b in self.batches], dtype=np.int64)

    def true_counts(self) -> np.ndarray:
        """Count matrix of shape ``(length, d)``."""
        return np.stack([b.counts() for b in self.batches]) if self.batches else np.zeros((0, self.domain.d))

    def true_histogram(self, t: int) -> Histogram:
        return Histogram.of_batch(self.batch(t), self.domain)


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CsvSchema:
    ts_col: str = "timestamp"
    user_col: str = "user_id"
    value_col: str = "value"


def ingest_csv(
    path: str | Path,
    schema: CsvSchema = CsvSchema(),
    trim_quantile: float | None = None,
    max_users_per_timestamp: int | None = None,
    seed: int = 0,
) -> StreamDataset:
    """Read a ``(timestamp, user, value)`` CSV into a stream.

    Values are dictionary-encoded in first-occurrence order. Integer timestamps
    are rebased so the earliest becomes 1 and gaps become empty batches;
    non-integer timestamps are ranked in sorted order. When a user reports more
    than once at a timestamp the last row wins.

    ``trim_quantile`` drops rows whose numeric value exceeds that quantile before
    encoding. ``max_users_per_timestamp`` subsamples large batches (seeded).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (schema.ts_col, schema.user_col, schema.value_col) if c not in header]
        if missing:
            raise ConfigError(f"columns {missing} not found in {path.name}; header is {header}")
        rows: list[tuple[int, str, str, str]] = []
        for rowno, row in enumerate(reader, start=2):
            ts, user, value = row.get(schema.ts_col), row.get(schema.user_col), row.get(schema.value_col)
            if ts is None or user is None or value is None or ts == "" or user == "" or value == "":
                raise IngestError(rowno, "missing field")
            rows.append((rowno, ts.strip(), user.strip(), value.strip()))

    if trim_quantile is not None:
        try:
            numeric = np.array([float(v) for _, _, _, v in rows])
        except ValueError as exc:
            raise ConfigError("trim_quantile needs numeric values") from exc
        cut = np.quantile(numeric, trim_quantile) if len(numeric) else 0.0
        rows = [r for r, x in zip(rows, numeric) if x <= cut]

    try:
        ts_int = [int(ts) for _, ts, _, _ in rows]
        t0 = min(ts_int) if ts_int else 1
        t_of = [t - t0 + 1 for t in ts_int]
        n_ts = max(t_of) if t_of else 0
    except ValueError:
        order = {ts: i + 1 for i, ts in enumerate(sorted({ts for _, ts, _, _ in rows}))}
        t_of = [order[ts] for _, ts, _, _ in rows]
        n_ts = len(order)

    latest: list[dict[str, tuple[int, str]]] = [dict() for _ in range(n_ts)]
    for (rowno, _, user, value), t in zip(rows, t_of):
        latest[t - 1][user] = (rowno, value)
    codes: dict[str, int] = {}
    for _, value in sorted(r for reports in latest for r in reports.values()):
        codes.setdefault(value, len(codes))
    per_t = [{u: codes[v] for u, (_, v) in reports.items()} for reports in latest]

    if not codes:
        raise ConfigError(f"{path.name} contains no data rows")
    domain = ValueDomain(len(codes))
    rng = np.random.default_rng(seed)
    batches = []
    for t, reports in enumerate(per_t, start=1):
        users = np.array(list(reports.keys()), dtype=object)
        values = np.fromiter(reports.values(), dtype=np.int64, count=len(reports))
        if max_users_per_timestamp is not None and len(values) > max_users_per_timestamp:
            keep = np.sort(rng.choice(len(values), size=max_users_per_timestamp, replace=False))
            users, values = users[keep], values[keep]
        batches.append(StreamBatch(t, users.astype(str), values, domain.d))
    return StreamDataset(domain, tuple(batches), labels=tuple(codes), meta={"source": str(path)})


# ---------------------------------------------------------------------------
# Synthetic streams


@dataclass
class ChangePoint:
    """A scheduled distribution change.

    kind ``swap``: from ``t`` on, exchange the mass of ``values[0]`` and ``values[1]``.
    kind ``shift``: from ``t`` on, move ``magnitude`` of total mass onto ``values``.
    kind ``bump``: like ``shift`` but only for ``duration`` timestamps.
    """

    t: int
    kind: str = "shift"
    values: list[int] = field(default_factory=list)
    magnitude: float = 0.0
    duration: int = 1


@dataclass
class SyntheticSpec:
    d: int = 16
    T: int = 100
    n: int | list[int] = 10_000
    distribution: str | list[float] = "zipf"
    zipf_exponent: float = 1.2
    change_points: list[ChangePoint] = field(default_factory=list)
    drift: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        doc = dict(doc)
        cps = [cp if isinstance(cp, ChangePoint) else ChangePoint(**cp) for cp in doc.pop("change_points", [])]
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(change_points=cps, **doc)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _base_distribution(spec: SyntheticSpec) -> np.ndarray:
    if isinstance(spec.distribution, str):
        if spec.distribution == "uniform":
            p = np.ones(spec.d)
        elif spec.distribution == "zipf":
            p = 1.0 / np.arange(1, spec.d + 1) ** spec.zipf_exponent
        else:
            raise ConfigError(f"unknown distribution {spec.distribution!r}")
    else:
        p = np.asarray(spec.distribution, dtype=float)
        if p.shape != (spec.d,) or (p < 0).any() or p.sum() <= 0:
            raise ConfigError("explicit distribution must be d non-negative weights")
    return p / p.sum()


def _apply_shift(p: np.ndarray, values: Sequence[int], magnitude: float) -> np.ndarray:
    target = np.zeros_like(p)
    target[list(values)] = 1.0 / len(values)
    return (1.0 - magnitude) * p + magnitude * target


def stream_distributions(spec: SyntheticSpec) -> np.ndarray:
    """Per-timestamp generating distributions, shape ``(T, d)``."""
    if spec.d < 1 or spec.T < 1:
        raise ConfigError("synthetic spec needs d >= 1 and T >= 1")
    for cp in spec.change_points:
        if not 1 <= cp.t <= spec.T:
            raise ConfigError(f"change-point t={cp.t} outside 1..{spec.T}")
        if any(not 0 <= v < spec.d for v in cp.values):
            raise ConfigError(f"change-point values {cp.values} outside the domain")
        if cp.kind == "swap" and len(cp.values) != 2:
            raise ConfigError("swap change-points need exactly two values")
        if cp.kind in ("shift", "bump") and (not cp.values or not 0 <= cp.magnitude <= 1):
            raise ConfigError("shift/bump change-points need values and magnitude in [0, 1]")
        if cp.kind not in ("swap", "shift", "bump"):
            raise ConfigError(f"unknown change-point kind {cp.kind!r}")

    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))
    base = _base_distribution(spec)
    logits = np.log(np.maximum(base, 1e-300))
    out = np.empty((spec.T, spec.d))
    for t in range(1, spec.T + 1):
        if spec.drift > 0 and t > 1:
            logits = logits + rng.normal(0.0, spec.drift, size=spec.d)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        for cp in spec.change_points:
            if cp.kind == "swap" and t >= cp.t:
                a, b = cp.values
                p[[a, b]] = p[[b, a]]
            elif cp.kind == "shift" and t >= cp.t:
                p = _apply_shift(p, cp.values, cp.magnitude)
            elif cp.kind == "bump" and cp.t <= t < cp.t + cp.duration:
                p = _apply_shift(p, cp.values, cp.magnitude)
        out[t - 1] = p
    return out


def synthesize_stream(spec: SyntheticSpec | dict) -> StreamDataset:
    """Generate a stream from ``spec``; identical specs give identical streams."""
    if isinstance(spec, dict):
        spec = SyntheticSpec.from_dict(spec)
    dists = stream_distributions(spec)
    ns = [spec.n] * spec.T if isinstance(spec.n, (int, np.integer)) else list(spec.n)
    if len(ns) != spec.T or any(n < 0 for n in ns):
        raise ConfigError("n must be a non-negative int or a list of length T")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1,)))
    domain = ValueDomain(spec.d)
    batches = []
    for t in range(1, spec.T + 1):
        n = int(ns[t - 1])
        counts = rng.multinomial(n, dists[t - 1])
        values = rng.permutation(np.repeat(np.arange(spec.d), counts))
        batches.append(StreamBatch(t, np.arange(n), values, spec.d))
    return StreamDataset(domain, tuple(batches), distributions=dists, meta={"synthetic": True, "seed": spec.seed})

