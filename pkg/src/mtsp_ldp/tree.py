"""Perfect binary trees over the padded value domain.

Nodes are stored in heap order: node ``(level, i)`` sits at flat index
``2**level - 1 + i`` and covers values ``[i * 2**(h - level), (i + 1) * 2**(h - level) - 1]``.
A node's property is the fraction of active users whose value lies in its
interval. Estimated trees partition users across the non-root levels and run
one frequency-oracle invocation per level; the root is pinned to 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .domain import StreamBatch, ValueDomain
from .oue import OueOracle


class Provenance(enum.IntEnum):
    MEASURED = 0
    INFERRED_FROM_PARENT = 1
    COPIED_FROM_PREVIOUS_RELEASE = 2
    EXACT = 3


def node_index(level: int, i: int) -> int:
    return (1 << level) - 1 + i


def level_slice(level: int) -> slice:
    return slice((1 << level) - 1, (1 << (level + 1)) - 1)


def node_interval(domain: ValueDomain, level: int, i: int) -> tuple[int, int]:
    width = 1 << (domain.height - level)
    return i * width, (i + 1) * width - 1


@dataclass(frozen=True)
class TreeNode:
    level: int
    index_in_level: int
    interval: tuple[int, int]
    property: float
    variance: float
    provenance: Provenance


@dataclass(frozen=True)
class PrivateTree:
    domain: ValueDomain
    properties: np.ndarray
    variances: np.ndarray
    provenance: np.ndarray
    budget_used: float = 0.0
    n_active: int = 0
    timestamp: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("properties", "variances", "provenance"):
            a = np.array(getattr(self, name), dtype=np.int8 if name == "provenance" else np.float64)
            if a.shape != (self.domain.n_nodes,):
                raise ValueError(f"{name} must have {self.domain.n_nodes} entries, got {a.shape}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def height(self) -> int:
        return self.domain.height

    def level(self, level: int) -> np.ndarray:
        return self.properties[level_slice(level)]

    @property
    def leaves(self) -> np.ndarray:
        return self.level(self.height)

    def __len__(self) -> int:
        return self.domain.n_nodes

    def nodes(self) -> Iterator[TreeNode]:
        for level in range(self.domain.levels):
            for i in range(1 << level):
                k = node_index(level, i)
                yield TreeNode(level, i, node_interval(self.domain, level, i), float(self.properties[k]),
                               float(self.variances[k]), Provenance(int(self.provenance[k])))

    def as_release(self, timestamp: int, n_active: int, provenance: Provenance | None = None, **meta) -> "PrivateTree":
        """Same properties re-stamped for another timestamp (approximation releases)."""
        prov = self.provenance if provenance is None else np.full(self.domain.n_nodes, provenance, dtype=np.int8)
        return replace(self, timestamp=timestamp, n_active=n_active, provenance=prov, meta={**self.meta, **meta})

    def to_json(self) -> dict:
        extra = self.meta.get("group_length")
        nodes = []
        for node in self.nodes():
            item = {"level": node.level, "index": node.index_in_level, "property": node.property,
                    "variance": node.variance, "provenance": node.provenance.name.lower()}
            if extra is not None:
                item["group_length"] = int(extra[node_index(node.level, node.index_in_level)])
            nodes.append(item)
        return {"t": self.timestamp, "n_t": self.n_active, "d": self.domain.d,
                "budget": self.budget_used, "nodes": nodes}

    @classmethod
    def from_json(cls, doc: dict) -> "PrivateTree":
        domain = ValueDomain(int(doc["d"]))
        props = np.zeros(domain.n_nodes)
        var = np.zeros(domain.n_nodes)
        prov = np.zeros(domain.n_nodes, dtype=np.int8)
        for node in doc["nodes"]:
            k = node_index(node["level"], node["index"])
            props[k] = node["property"]
            var[k] = node["variance"]
            prov[k] = Provenance[node["provenance"].upper()]
        return cls(domain, props, var, prov, float(doc.get("budget", 0.0)), int(doc["n_t"]), int(doc["t"]))


def aggregate_leaves(domain: ValueDomain, leaves: np.ndarray) -> np.ndarray:
    """Heap-ordered node values where each parent is the sum of its children."""
    out = np.empty(domain.n_nodes)
    cur = np.asarray(leaves, dtype=float)
    for level in range(domain.height, -1, -1):
        out[level_slice(level)] = cur
        cur = cur[0::2] + cur[1::2] if level > 0 else cur
    return out


def build_exact_tree(batch: StreamBatch, domain: ValueDomain) -> PrivateTree:
    """Tree of exact interval frequencies (relative to the batch's active users)."""
    # aggregate integer counts first so every node, the root included, is one exact division
    counts = aggregate_leaves(domain, batch.counts(domain.padded_size))
    props = counts / batch.n if batch.n else counts
    n = domain.n_nodes
    return PrivateTree(domain, props, np.zeros(n),
                       np.full(n, Provenance.EXACT, dtype=np.int8), 0.0, batch.n, batch.t)


@dataclass(frozen=True)
class PrunedSkeleton:
    """Prefix-closed set of kept nodes (always including the root)."""

    domain: ValueDomain
    kept: np.ndarray

    def __post_init__(self):
        kept = np.array(self.kept, dtype=bool)
        if kept.shape != (self.domain.n_nodes,) or not kept[0]:
            raise ValueError("skeleton must cover every node and keep the root")
        for level in range(1, self.domain.levels):
            child = kept[level_slice(level)]
            parent = kept[level_slice(level - 1)]
            if (child & ~np.repeat(parent, 2)).any():
                raise ValueError(f"kept node at level {level} has a pruned parent")
        kept.setflags(write=False)
        object.__setattr__(self, "kept", kept)

    @classmethod
    def full(cls, domain: ValueDomain) -> "PrunedSkeleton":
        return cls(domain, np.ones(domain.n_nodes, dtype=bool))

    def kept_in_level(self, level: int) -> np.ndarray:
        return np.nonzero(self.kept[level_slice(level)])[0]

    @property
    def measured_levels(self) -> list[int]:
        return [lv for lv in range(1, self.domain.levels) if self.kept[level_slice(lv)].any()]

    @property
    def is_full(self) -> bool:
        return bool(self.kept.all())


def partition_users(n: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    """Assign each of ``n`` users to one of ``groups`` groups uniformly at random.

    Group sizes are ``n // groups`` with the remainder handed out one each to
    the first groups.
    """
    assign = np.empty(n, dtype=np.int64)
    if groups == 0:
        return assign
    base, extra = divmod(n, groups)
    sizes = np.full(groups, base)
    sizes[:extra] += 1
    perm = rng.permutation(n)
    start = 0
    for g, size in enumerate(sizes):
        assign[perm[start:start + size]] = g
        start += size
    return assign


def estimate_tree(
    batch: StreamBatch,
    domain: ValueDomain,
    epsilon: float,
    rng: np.random.Generator,
    structure: PrunedSkeleton | None = None,
    oracle=None,
) -> PrivateTree:
    """Estimate a private tree of ``batch`` with budget ``epsilon`` per user.

    Users are split across the levels of ``structure`` that hold kept nodes;
    each level runs one oracle invocation over its kept nodes. Nodes outside a
    pruned skeleton are re-inflated top-down as half their parent.
    """
    oracle = oracle or OueOracle()
    structure = structure or PrunedSkeleton.full(domain)
    levels = structure.measured_levels
    n = batch.n
    props = np.full(domain.n_nodes, np.nan)
    var = np.zeros(domain.n_nodes)
    prov = np.full(domain.n_nodes, Provenance.INFERRED_FROM_PARENT, dtype=np.int8)
    props[0] = 1.0 if n > 0 else 0.0
    prov[0] = Provenance.EXACT

    if oracle.partitioned:
        assign = partition_users(n, len(levels), rng)
        group_values = [batch.values[assign == g] for g in range(len(levels))]
    else:
        group_values = [batch.values] * len(levels)
    level_rngs = rng.spawn(len(levels)) if levels else []

    group_sizes = {}
    for level, values, level_rng in zip(levels, group_values, level_rngs):
        kept = structure.kept_in_level(level)
        counts = np.bincount(values >> (domain.height - level), minlength=1 << level)[kept]
        est, v = oracle.estimate(counts, values.size, epsilon, level_rng)
        sl = level_slice(level)
        props[sl.start + kept] = est
        var[sl.start + kept] = v
        prov[sl.start + kept] = Provenance.MEASURED
        group_sizes[level] = int(values.size)

    for level in range(1, domain.levels):
        sl = level_slice(level)
        missing = np.isnan(props[sl])
        if missing.any():
            parent = level_slice(level - 1)
            idx = np.nonzero(missing)[0]
            props[sl.start + idx] = props[parent.start + idx // 2] / 2
            var[sl.start + idx] = var[parent.start + idx // 2] / 4

    meta = {"group_sizes": group_sizes}
    if oracle.partitioned and levels and (n % len(levels) or n < len(levels)):
        meta["uneven_partition"] = True
    if any(size == 0 for size in group_sizes.values()):
        meta["empty_levels"] = [lv for lv, size in group_sizes.items() if size == 0]
    return PrivateTree(domain, props, var, prov, float(epsilon), n, batch.t, meta)


def minimum_cover(domain: ValueDomain, v1: int, v2: int) -> list[tuple[int, int]]:
    """Fewest tree nodes whose intervals tile ``[v1, v2]`` exactly, left to right."""
    if not (0 <= v1 <= v2 <= domain.d - 1):
        raise ValueError(f"range [{v1}, {v2}] outside 0..{domain.d - 1}")
    cover = []
    lo, hi = v1, v2 + 1
    # greedy from the left: take the largest aligned block starting at lo that fits
    while lo < hi:
        level = domain.height
        size = 1
        while level > 0 and lo % (size * 2) == 0 and lo + size * 2 <= hi:
            size *= 2
            level -= 1
        cover.append((level, lo // size))
        lo += size
    return cover


def tree_answer(tree: PrivateTree, cover: list[tuple[int, int]]) -> float:
    """Estimated number of active users whose value lies in the covered range."""
    idx = [node_index(level, i) for level, i in cover]
    return float(tree.properties[idx].sum()) * tree.n_active
