"""End-to-end MTSP-LDP run over a stream dataset.

The first ``w`` timestamps publish a full tree at ``eps / w``. After that each
timestamp estimates a dissimilarity tree at ``eps / 2w``, asks OBA for a
publication budget and either publishes (ATC then group smoothing) or reuses
the previous release.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .adaptive import GroupSmoother, atc, group_smooth, theta1_by_level
from .allocation import (BudgetLedger, DissimilarityWindow, PublicationErrorTable, as_fraction,
                         oba_allocate, oba_allocate_fast)
from .dissimilarity import estimate_dissimilarity
from .domain import StreamDataset
from .oue import get_oracle
from .queries import ReleaseSeries
from .tree import PrivateTree, Provenance, estimate_tree


def timestamp_rng(seed: int, t: int, stream: int = 0) -> np.random.Generator:
    """Independent generator per (seed, timestamp, stream), stable across methods."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t, stream)))


@dataclass
class RunResult:
    method: str
    releases: ReleaseSeries
    ledger: BudgetLedger
    timing: list[float] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)

    @property
    def publication_fraction(self) -> float:
        steady = [d for d in self.decisions if d.get("phase") != "warmup"]
        return float(np.mean([d["publish"] for d in steady])) if steady else 1.0


@dataclass
class MtspConfig:
    epsilon: float = 1.0
    w: int = 20
    seed: int = 0
    exact_oba: bool = False
    literal_alg1: bool = False
    smoothing: bool = True
    theta1: float | None = None
    theta2: float | None = None
    oracle: str = "oue"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.w < 1:
            raise ValueError("w must be >= 1")


def run_mtsp(dataset: StreamDataset, config: MtspConfig) -> RunResult:
    eps = as_fraction(config.epsilon)
    w = config.w
    eps1 = eps / (2 * w)
    oracle = get_oracle(config.oracle)
    domain = dataset.domain
    height = domain.height
    ledger = BudgetLedger(eps, w, publication_cap=eps / 2)
    window = DissimilarityWindow(w)
    table = PublicationErrorTable(float(eps), w, oracle.unit_variance)
    smoother = GroupSmoother(domain.n_nodes, w, config.theta2)
    series = ReleaseSeries(method="mtsp")
    result = RunResult("mtsp", series, ledger)
    if dataset.length <= w:
        warnings.warn(f"stream of length {dataset.length} never leaves the warmup phase (w={w})")

    def variance(e, n):
        return oracle.unit_variance(e) / max(n, 1)

    prev: PrivateTree | None = None
    for batch in dataset.batches:
        t = batch.t
        start = time.perf_counter()
        rng = timestamp_rng(config.seed, t)
        if t <= w:
            release = estimate_tree(batch, domain, float(eps / w), rng, oracle=oracle)
            ledger.record(t, eps1, eps1, None, "warmup")
            result.decisions.append({"t": t, "phase": "warmup", "publish": True, "eps2": float(eps1)})
        else:
            rng_d, rng_p = rng.spawn(2)
            noisy = estimate_tree(batch, domain, float(eps1), rng_d, oracle=oracle)
            window.push(estimate_dissimilarity(noisy, prev, float(eps1)))
            n_group = max(batch.n / height, 1.0) if height else max(batch.n, 1)
            if config.exact_oba:
                alloc = oba_allocate(window, ledger, t, n_group, oracle.unit_variance, eps1)
            else:
                alloc = oba_allocate_fast(window, ledger, t, n_group, table, oracle.unit_variance, eps1)
            if alloc.publish:
                eps2 = float(alloc.eps2)
                th1 = config.theta1 if config.theta1 is not None else theta1_by_level(height, eps2, n_group, variance)
                fresh = atc(noisy, th1, eps2, batch, rng_p, oracle)
                release = group_smooth(fresh, smoother, t) if config.smoothing else fresh
            elif config.literal_alg1 and config.smoothing:
                release = group_smooth(prev.as_release(t, batch.n), smoother, t)
            else:
                release = prev.as_release(t, batch.n, Provenance.COPIED_FROM_PREVIOUS_RELEASE)
            result.decisions.append({"t": t, "phase": "steady", "publish": alloc.publish, "eps2": float(alloc.eps2),
                                     "k_star": alloc.k_star, "dis_hat": window.last.dis_hat})
        if release.n_active != batch.n or release.timestamp != t:
            release = release.as_release(t, batch.n)
        series.append(release)
        prev = release
        result.timing.append(time.perf_counter() - start)
    return result


def publication_budget(result: RunResult) -> Fraction:
    return sum((e.eps2 for e in result.ledger.entries.values()), Fraction(0))
