"""Histogram-publishing baselines under w-event LDP.

* LBU spends ``eps / w`` at every timestamp.
* LSP spends ``eps`` once per stride of ``w`` timestamps and repeats that release.
* LBD tests a private dissimilarity at ``eps / 2w`` and publishes with half of
  the publication budget left in the window.
* LBA gives every timestamp a quantum of ``eps / 2w``; a publication absorbs
  the quanta of skipped timestamps and nullifies as many of the following ones.

Every baseline publishes a flat frequency histogram over the ``d`` values. It is
lifted to a tree by exact summation so the shared query engine can answer
range queries from it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .allocation import BudgetLedger, as_fraction
from .domain import StreamBatch, StreamDataset, ValueDomain
from .oue import get_oracle
from .pipeline import RunResult, timestamp_rng
from .queries import ReleaseSeries
from .tree import PrivateTree, Provenance, aggregate_leaves

METHODS = ("lbu", "lsp", "lbd", "lba")


@dataclass
class BaselineConfig:
    epsilon: float = 1.0
    w: int = 20
    seed: int = 0
    oracle: str = "oue"
    decay: float = 0.5          # LBD: share of the remaining publication budget offered
    max_absorb: int | None = None  # LBA: cap on absorbed quanta (default w)


def lift_histogram(domain: ValueDomain, estimates: np.ndarray, variance: float, t: int, n: int,
                   budget: float, provenance: Provenance = Provenance.MEASURED) -> PrivateTree:
    """Tree view of a flat histogram; each node is the exact sum of its leaves."""
    leaves = np.zeros(domain.padded_size)
    leaves[:domain.d] = estimates
    leaf_var = np.zeros(domain.padded_size)
    leaf_var[:domain.d] = variance
    return PrivateTree(domain, aggregate_leaves(domain, leaves), aggregate_leaves(domain, leaf_var),
                       np.full(domain.n_nodes, provenance, dtype=np.int8), budget, n, t)


def _histogram(batch: StreamBatch, domain: ValueDomain, epsilon: float, rng, oracle) -> tuple[np.ndarray, float]:
    return oracle.estimate(batch.counts(domain.d), batch.n, epsilon, rng)


class _Runner:
    def __init__(self, name: str, dataset: StreamDataset, config: BaselineConfig, publication_cap=None):
        self.name = name
        self.dataset = dataset
        self.domain = dataset.domain
        self.config = config
        self.eps = as_fraction(config.epsilon)
        self.oracle = get_oracle(config.oracle)
        self.ledger = BudgetLedger(self.eps, config.w, publication_cap)
        self.result = RunResult(name, ReleaseSeries(method=name), self.ledger)
        self.prev_hist: np.ndarray | None = None
        self.prev: PrivateTree | None = None

    def variance(self, eps: float, n: int) -> float:
        return self.oracle.unit_variance(eps) / max(n, 1)

    def publish(self, batch: StreamBatch, eps2: Fraction, rng) -> PrivateTree:
        est, var = _histogram(batch, self.domain, float(eps2), rng, self.oracle)
        self.prev_hist = est
        return lift_histogram(self.domain, est, var, batch.t, batch.n, float(eps2))

    def approximate(self, batch: StreamBatch) -> PrivateTree:
        return self.prev.as_release(batch.t, batch.n, Provenance.COPIED_FROM_PREVIOUS_RELEASE)

    def dissimilarity(self, batch: StreamBatch, eps1: Fraction, rng) -> float:
        est, var = _histogram(batch, self.domain, float(eps1), rng, self.oracle)
        prev = self.prev_hist if self.prev_hist is not None else np.zeros(self.domain.d)
        return float(np.mean((est - prev) ** 2) - var)

    def emit(self, release: PrivateTree, start: float, **decision) -> None:
        self.result.releases.append(release)
        self.prev = release
        self.result.timing.append(time.perf_counter() - start)
        self.result.decisions.append(decision)


def run_lbu(dataset: StreamDataset, config: BaselineConfig) -> RunResult:
    r = _Runner("lbu", dataset, config)
    eps_t = r.eps / config.w
    for batch in dataset.batches:
        start = time.perf_counter()
        r.ledger.record(batch.t, 0, eps_t, None, "publish")
        r.emit(r.publish(batch, eps_t, timestamp_rng(config.seed, batch.t)), start, t=batch.t, publish=True, eps2=float(eps_t))
    return r.result


def run_lsp(dataset: StreamDataset, config: BaselineConfig) -> RunResult:
    r = _Runner("lsp", dataset, config)
    for batch in dataset.batches:
        start = time.perf_counter()
        if (batch.t - 1) % config.w == 0:
            r.ledger.record(batch.t, 0, r.eps, None, "publish")
            release = r.publish(batch, r.eps, timestamp_rng(config.seed, batch.t))
            r.emit(release, start, t=batch.t, publish=True, eps2=float(r.eps))
        else:
            r.ledger.record(batch.t, 0, 0, None, "approximate")
            r.emit(r.approximate(batch), start, t=batch.t, publish=False, eps2=0.0)
    return r.result


def run_lbd(dataset: StreamDataset, config: BaselineConfig) -> RunResult:
    r = _Runner("lbd", dataset, config, publication_cap=as_fraction(config.epsilon) / 2)
    eps1 = r.eps / (2 * config.w)
    decay = as_fraction(config.decay)
    for batch in dataset.batches:
        start = time.perf_counter()
        rng_d, rng_p = timestamp_rng(config.seed, batch.t).spawn(2)
        dis = r.dissimilarity(batch, eps1, rng_d)
        eps2 = r.ledger.remaining_publication(batch.t) * decay
        # nothing to approximate with before the first release
        publish = r.prev is None or (eps2 > 0 and dis > r.variance(float(eps2), batch.n))
        if publish:
            r.ledger.record(batch.t, eps1, eps2, None, "publish")
            r.emit(r.publish(batch, eps2, rng_p), start, t=batch.t, publish=True, eps2=float(eps2), dis_hat=dis)
        else:
            r.ledger.record(batch.t, eps1, 0, None, "approximate")
            r.emit(r.approximate(batch), start, t=batch.t, publish=False, eps2=0.0, dis_hat=dis)
    return r.result


def run_lba(dataset: StreamDataset, config: BaselineConfig) -> RunResult:
    r = _Runner("lba", dataset, config, publication_cap=as_fraction(config.epsilon) / 2)
    quantum = r.eps / (2 * config.w)
    cap = config.max_absorb or config.w
    drained = 0  # last timestamp whose quantum is already spent or nullified
    for batch in dataset.batches:
        t = batch.t
        start = time.perf_counter()
        if t <= drained:
            r.ledger.record(t, 0, 0, None, "nullified")
            r.emit(r.approximate(batch), start, t=t, publish=False, eps2=0.0)
            continue
        rng_d, rng_p = timestamp_rng(config.seed, t).spawn(2)
        dis = r.dissimilarity(batch, quantum, rng_d)
        m = min(t - drained, cap)
        eps2 = min(m * quantum, r.ledger.remaining_publication(t))
        publish = r.prev is None or (eps2 > 0 and dis > r.variance(float(eps2), batch.n))
        if publish:
            r.ledger.record(t, quantum, eps2, None, "publish")
            drained = t + m - 1
            r.emit(r.publish(batch, eps2, rng_p), start, t=t, publish=True, eps2=float(eps2), dis_hat=dis, absorbed=m)
        else:
            r.ledger.record(t, quantum, 0, None, "approximate")
            r.emit(r.approximate(batch), start, t=t, publish=False, eps2=0.0, dis_hat=dis)
    return r.result


RUNNERS = {"lbu": run_lbu, "lsp": run_lsp, "lbd": run_lbd, "lba": run_lba}
