"""Adaptive tree construction, the pruning/grouping thresholds, and smoothing.

ATC walks the noisy dissimilarity tree top-down and only splits a node whose
estimate reaches ``theta1`` for the height of its subtree. The kept skeleton is
re-estimated with the publication budget and pruned nodes are filled in as
half their parent.

Grouping keeps, per node, the most recent run of publications whose raw
estimates look alike. A new estimate joins the run when its bias-corrected
squared deviation from the run mean is at most ``theta2``; otherwise the run
restarts. The release is the run mean.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import StreamBatch
from .errors import ContractError
from .oue import OueOracle, oue_variance
from .tree import PrivateTree, PrunedSkeleton, estimate_tree, level_slice


def theta1_threshold(epsilon_2: float, h: int, n_group: int, variance=oue_variance) -> float:
    """Pruning threshold for a subtree of height ``h``.

    ``sqrt((2^(h+1) - 3) / (2^(h+1) - 1) * var)``, which never exceeds ``sqrt(var)``.
    """
    if h < 1:
        raise ValueError("subtree height must be >= 1")
    factor = (2.0 ** (h + 1) - 3) / (2.0 ** (h + 1) - 1)
    return math.sqrt(factor * variance(epsilon_2, n_group))


def theta1_by_level(height: int, epsilon_2: float, n_group: int, variance=oue_variance) -> np.ndarray:
    """Threshold per internal level (index = level, leaves excluded)."""
    return np.array([theta1_threshold(epsilon_2, height - lv, n_group, variance) for lv in range(height)])


def prune(noisy_tree: PrivateTree, thresholds) -> PrunedSkeleton:
    """Top-down prefix-closed skeleton: children survive only below split nodes.

    ``thresholds`` is a scalar or one value per internal level.
    """
    domain = noisy_tree.domain
    th = np.broadcast_to(np.asarray(thresholds, dtype=float), (domain.height,))
    kept = np.zeros(domain.n_nodes, dtype=bool)
    kept[0] = True
    for level in range(domain.height):
        sl = level_slice(level)
        split = kept[sl] & (noisy_tree.properties[sl] >= th[level])
        kept[level_slice(level + 1)] = np.repeat(split, 2)
    return PrunedSkeleton(domain, kept)


def atc(
    noisy_tree: PrivateTree,
    theta1,
    epsilon_2: float,
    batch: StreamBatch,
    rng: np.random.Generator,
    oracle=None,
) -> PrivateTree:
    """Prune ``noisy_tree`` at ``theta1`` and re-estimate the survivors at ``epsilon_2``."""
    if not epsilon_2 > 0:
        raise ValueError("ATC runs only on publication timestamps (epsilon_2 > 0)")
    skeleton = prune(noisy_tree, theta1)
    tree = estimate_tree(batch, noisy_tree.domain, epsilon_2, rng, structure=skeleton, oracle=oracle or OueOracle())
    return PrivateTree(tree.domain, tree.properties, tree.variances, tree.provenance, tree.budget_used,
                       tree.n_active, tree.timestamp, {**tree.meta, "kept": int(skeleton.kept.sum())})


# ---------------------------------------------------------------------------
# Grouping and smoothing


class Aggregation(enum.Enum):
    MEAN = "mean"


@dataclass
class GroupState:
    """One node's current group: raw member estimates, oldest first."""

    members: list[int] = field(default_factory=list)
    estimates: list[float] = field(default_factory=list)
    variances: list[float] = field(default_factory=list)
    aggregation: Aggregation = Aggregation.MEAN

    @property
    def length(self) -> int:
        return len(self.members)

    @property
    def total(self) -> float:
        return float(sum(self.estimates))

    def mean(self) -> float:
        if not self.members:
            raise ContractError("empty group")
        return self.total / self.length

    def release_variance(self) -> float:
        return sum(self.variances) / self.length ** 2

    def extend(self, t: int, estimate: float, variance: float, max_length: int | None = None) -> None:
        self.members.append(t)
        self.estimates.append(estimate)
        self.variances.append(variance)
        if max_length is not None:
            while self.length > max_length:
                for seq in (self.members, self.estimates, self.variances):
                    seq.pop(0)

    def reset(self, t: int, estimate: float, variance: float) -> None:
        self.members[:] = [t]
        self.estimates[:] = [estimate]
        self.variances[:] = [variance]


def sigma_hat_from(new_estimate: float, var_now: float, estimates, variances) -> float:
    """Bias-corrected squared deviation of a new estimate from a group mean.

    The correction is ``var_now + sum(variances) / l^2``, which equals
    ``(l + 1) / l * var`` when every variance is ``var``.
    """
    l = len(estimates)
    if l == 0:
        raise ContractError("empty group")
    dev = new_estimate - sum(estimates) / l
    return dev * dev - (var_now + sum(variances) / (l * l))


def sigma_hat(new_estimate: float, group: GroupState, epsilon_2: float, n_group: int, variance=oue_variance) -> float:
    return sigma_hat_from(new_estimate, variance(epsilon_2, n_group), group.estimates, group.variances)


def theta2_threshold(l: int, var_now: float, var_members) -> float:
    """Largest squared deviation for which smoothing over ``l + 1`` members still helps."""
    var_members = list(var_members)
    if l < 1 or len(var_members) != l:
        raise ValueError("need l >= 1 member variances")
    return ((l + 1) ** 2 * var_now - (var_now + sum(var_members))) / (l * l)


def group_step(group: GroupState, t: int, estimate: float, variance: float,
               max_length: int | None = None, theta2: float | None = None) -> tuple[float, float]:
    """Update one node's group with a new raw estimate and return (release, release variance)."""
    if group.length == 0:
        group.reset(t, estimate, variance)
    else:
        s = sigma_hat_from(estimate, variance, group.estimates, group.variances)
        th = theta2_threshold(group.length, variance, group.variances) if theta2 is None else theta2
        if s <= th:
            group.extend(t, estimate, variance, max_length)
        else:
            group.reset(t, estimate, variance)
    return group.mean(), group.release_variance()


class GroupSmoother:
    """Vectorized grouping state for every node of a tree.

    Keeps the last ``max_length`` raw publications (row 0 is the newest) and the
    current group length per node. A node's group is always the newest
    ``length`` rows, so group means come straight from cumulative sums.
    """

    def __init__(self, n_nodes: int, max_length: int, theta2: float | None = None):
        if max_length < 1:
            raise ValueError("max_length must be >= 1")
        self.n_nodes = n_nodes
        self.max_length = max_length
        self.theta2 = theta2
        self.estimates = np.zeros((0, n_nodes))
        self.variances = np.zeros((0, n_nodes))
        self.timestamps: list[int] = []
        self.length = np.zeros(n_nodes, dtype=np.int64)

    def _group_sums(self, arr: np.ndarray, length: np.ndarray) -> np.ndarray:
        if arr.shape[0] == 0:
            return np.zeros(self.n_nodes)
        cs = np.vstack([np.zeros((1, self.n_nodes)), np.cumsum(arr, axis=0)])
        return cs[length, np.arange(self.n_nodes)]

    def groups(self) -> list[GroupState]:
        """Per-node :class:`GroupState` snapshots (oldest member first)."""
        out = []
        for a in range(self.n_nodes):
            l = int(self.length[a])
            out.append(GroupState(self.timestamps[:l][::-1], list(self.estimates[:l, a][::-1]),
                                  list(self.variances[:l, a][::-1])))
        return out

    def update(self, t: int, estimate: np.ndarray, variance: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fold one raw publication in; returns (release, release variance, group lengths)."""
        estimate = np.asarray(estimate, dtype=float)
        variance = np.asarray(variance, dtype=float)
        l = self.length
        has = l > 0
        safe_l = np.where(has, l, 1)
        mean = self._group_sums(self.estimates, l) / safe_l
        var_sum = self._group_sums(self.variances, l)
        s = (estimate - mean) ** 2 - (variance + var_sum / safe_l ** 2)
        if self.theta2 is None:
            th = ((safe_l + 1) ** 2 * variance - (variance + var_sum)) / safe_l ** 2
        else:
            th = np.full(self.n_nodes, self.theta2)
        joined = has & (s <= th)
        new_len = np.where(joined, np.minimum(l + 1, self.max_length), 1)

        keep_rows = self.max_length - 1
        self.estimates = np.vstack([estimate[None, :], self.estimates[:keep_rows]])
        self.variances = np.vstack([variance[None, :], self.variances[:keep_rows]])
        self.timestamps = [t] + self.timestamps[:keep_rows]
        self.length = new_len
        release = self._group_sums(self.estimates, new_len) / new_len
        release_var = self._group_sums(self.variances, new_len) / new_len ** 2
        return release, release_var, new_len.copy()


def group_smooth(new_tree: PrivateTree, smoother: GroupSmoother, t: int) -> PrivateTree:
    """Release for a publication timestamp: every node becomes its group mean."""
    release, var, lengths = smoother.update(t, new_tree.properties, new_tree.variances)
    return PrivateTree(new_tree.domain, release, var, new_tree.provenance, new_tree.budget_used,
                       new_tree.n_active, t, {**new_tree.meta, "group_length": lengths})
