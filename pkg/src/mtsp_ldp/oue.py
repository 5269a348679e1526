"""Optimized unary encoding (OUE) frequency oracle.

Each user one-hot encodes a value, keeps the hot bit with probability 1/2 and
sets every cold bit with probability ``q = 1/(e^eps + 1)``. The server sums the
reports per bit and debiases. Simulation normally takes the binomial fast path:
the bit sum of a column is ``Binomial(c_j, p) + Binomial(n - c_j, q)``, which has
the same distribution as perturbing every user and adding the bits up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OueParams:
    epsilon: float
    domain_size: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.domain_size < 1:
            raise ValueError("domain_size must be >= 1")

    p = 0.5

    @property
    def q(self) -> float:
        # 1/(e^eps + 1) without overflow for large eps
        return 1.0 / (math.exp(self.epsilon) + 1.0) if self.epsilon < 700 else 0.0


@dataclass(frozen=True)
class AggregateReport:
    bit_sums: np.ndarray
    n: int


def oue_perturb(value_index: int, params: OueParams, rng: np.random.Generator) -> np.ndarray:
    """Perturb one user's value into a bit vector of length ``domain_size``."""
    if not 0 <= value_index < params.domain_size:
        raise ValueError(f"value index {value_index} outside 0..{params.domain_size - 1}")
    bits = rng.random(params.domain_size) < params.q
    bits[value_index] = rng.random() < params.p
    return bits.astype(np.uint8)


def oue_perturb_many(values: np.ndarray, params: OueParams, rng: np.random.Generator) -> np.ndarray:
    """Per-user perturbation of many values; returns an ``(n, domain_size)`` bit matrix.

    Values equal to -1 encode to the all-zero vector before perturbation (users
    whose value falls outside the nodes queried by a pruned level).
    """
    values = np.asarray(values, dtype=np.int64)
    n = values.size
    bits = rng.random((n, params.domain_size)) < params.q
    hot = values >= 0
    rows = np.nonzero(hot)[0]
    bits[rows, values[hot]] = rng.random(rows.size) < params.p
    return bits.astype(np.uint8)


def oue_aggregate(report: AggregateReport, params: OueParams) -> np.ndarray:
    """Unbiased frequency estimates ``(y_j - n q) / (n (p - q))``, unclamped.

    With ``n == 0`` there is nothing to estimate and the all-zero vector is returned.
    """
    if report.n == 0:
        return np.zeros(params.domain_size)
    q = params.q
    return (np.asarray(report.bit_sums, dtype=float) - report.n * q) / (report.n * (params.p - q))


def oue_unit_variance(epsilon: float) -> float:
    """``n`` times the OUE estimator variance: ``4 e^eps / (e^eps - 1)^2``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    # divided through by e^(2 eps) so large budgets do not overflow
    return 4.0 * math.exp(-epsilon) / (-math.expm1(-epsilon)) ** 2


def oue_variance(epsilon: float, n: int) -> float:
    """Variance of one OUE frequency estimate with ``n`` contributing users."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return oue_unit_variance(epsilon) / n


def oue_simulate_aggregate(
    true_counts: np.ndarray,
    params: OueParams,
    rng: np.random.Generator,
    n: int | None = None,
    per_user: bool = False,
) -> AggregateReport:
    """Simulate the bit sums the server would receive.

    ``n`` defaults to ``true_counts.sum()``; a larger ``n`` means that many users
    hold values outside the encoded nodes (all-zero one-hot vectors).
    """
    counts = np.asarray(true_counts, dtype=np.int64)
    n = int(counts.sum()) if n is None else int(n)
    if counts.sum() > n:
        raise ValueError("counts exceed the number of users")
    if per_user:
        values = np.concatenate([np.repeat(np.arange(counts.size), counts), np.full(n - counts.sum(), -1)])
        return AggregateReport(oue_perturb_many(values, params, rng).sum(axis=0, dtype=np.int64), n)
    y = rng.binomial(counts, params.p) + rng.binomial(n - counts, params.q)
    return AggregateReport(y.astype(np.int64), n)


class OueOracle:
    """OUE as the frequency oracle behind tree and histogram estimation."""

    partitioned = True
    name = "oue"

    def unit_variance(self, epsilon: float) -> float:
        return oue_unit_variance(epsilon)

    def variance(self, epsilon: float, n: int) -> float:
        return oue_variance(epsilon, max(int(n), 1))

    def estimate(self, counts: np.ndarray, n: int, epsilon: float, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        if n == 0:
            return np.zeros(len(counts)), 0.0
        params = OueParams(epsilon, len(counts))
        est = oue_aggregate(oue_simulate_aggregate(counts, params, rng, n=n), params)
        return est, oue_variance(epsilon, n)


class ExactOracle:
    """Noiseless stand-in: returns true frequencies with zero variance.

    Used for end-to-end exactness checks. It sees every user at every level,
    so trees built with it are the exact trees.
    """

    partitioned = False
    name = "exact"

    def unit_variance(self, epsilon: float) -> float:
        return 0.0

    def variance(self, epsilon: float, n: int) -> float:
        return 0.0

    def estimate(self, counts: np.ndarray, n: int, epsilon: float, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        if n == 0:
            return np.zeros(len(counts)), 0.0
        return np.asarray(counts, dtype=float) / n, 0.0


def get_oracle(name: str):
    if name == "oue":
        return OueOracle()
    if name == "exact":
        return ExactOracle()
    raise ValueError(f"unknown frequency oracle {name!r}")
