"""Dissimilarity between the current stream statistics and the last release.

The true dissimilarity is the mean squared difference of node properties
between the exact tree of the current batch and the previous release. The
private estimate uses the noisy tree instead and subtracts the mean per-node
estimation variance, which removes the noise bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .tree import PrivateTree


@dataclass(frozen=True)
class DissimilarityRecord:
    t: int
    dis_hat: float
    budget: float

    @property
    def dis_hat_clamped(self) -> float:
        return max(self.dis_hat, 0.0)


def _check_domains(a: PrivateTree, b: PrivateTree) -> None:
    if a.domain != b.domain:
        raise ValueError(f"trees over different domains ({a.domain.d} vs {b.domain.d})")


def true_dissimilarity(current: PrivateTree, previous_release: PrivateTree) -> float:
    _check_domains(current, previous_release)
    return float(np.mean((current.properties - previous_release.properties) ** 2))


def estimate_dissimilarity(noisy_current: PrivateTree, previous_release: PrivateTree, epsilon_1: float) -> DissimilarityRecord:
    """Bias-corrected dissimilarity of a noisy tree against the previous release.

    Subtracts the node-averaged recorded variance; for equal-size level groups
    this is exactly the per-invocation variance at ``epsilon_1``.
    """
    _check_domains(noisy_current, previous_release)
    if not math.isclose(noisy_current.budget_used, epsilon_1, rel_tol=1e-12):
        raise ContractError(f"tree was estimated with budget {noisy_current.budget_used}, not {epsilon_1}")
    if not np.isfinite(noisy_current.variances).all():
        raise ContractError("noisy tree lacks per-node variance metadata")
    sq = np.mean((noisy_current.properties - previous_release.properties) ** 2)
    return DissimilarityRecord(noisy_current.timestamp, float(sq - noisy_current.variances.mean()), epsilon_1)
