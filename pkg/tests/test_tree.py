import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtsp_ldp.domain import StreamBatch, ValueDomain
from mtsp_ldp.oue import ExactOracle, oue_variance
from mtsp_ldp.tree import (PrivateTree, Provenance, PrunedSkeleton, build_exact_tree, estimate_tree, level_slice,
                           minimum_cover, node_index, node_interval, partition_users, tree_answer)
from oracles import exact_node_freqs, min_cover_by_enumeration, min_cover_size, node_intervals


def _batch(values, d, t=1):
    values = np.asarray(values)
    return StreamBatch(t, np.arange(values.size), values, d)


@given(st.integers(1, 40), st.data())
def test_exact_tree_matches_interval_oracle(d, data):
    values = data.draw(st.lists(st.integers(0, d - 1), max_size=60))
    dom = ValueDomain(d)
    tree = build_exact_tree(_batch(values, d), dom)
    oracle = exact_node_freqs(values, dom.padded_size)
    for (level, i), (lo, hi) in node_intervals(dom.padded_size).items():
        assert node_interval(dom, level, i) == (lo, hi)
        assert tree.properties[node_index(level, i)] == pytest.approx(oracle[(level, i)], abs=1e-12)
    assert (tree.provenance == Provenance.EXACT).all()


def test_tree_arrays_read_only_and_shape_checked():
    dom = ValueDomain(4)
    tree = build_exact_tree(_batch([0, 1], 4), dom)
    with pytest.raises(ValueError):
        tree.properties[0] = 2
    with pytest.raises(ValueError):
        PrivateTree(dom, np.zeros(3), np.zeros(7), np.zeros(7))


def test_json_round_trip(rng):
    dom = ValueDomain(6)
    tree = estimate_tree(_batch(rng.integers(0, 6, 500), 6, t=4), dom, 1.0, rng)
    back = PrivateTree.from_json(tree.to_json())
    assert np.array_equal(back.properties, tree.properties)
    assert np.array_equal(back.variances, tree.variances)
    assert np.array_equal(back.provenance, tree.provenance)
    assert (back.timestamp, back.n_active, back.domain) == (4, 500, dom)


def test_skeleton_rejects_orphans():
    dom = ValueDomain(4)
    kept = np.ones(7, dtype=bool)
    kept[1] = False
    with pytest.raises(ValueError):
        PrunedSkeleton(dom, kept)
    kept[3] = kept[4] = False
    assert not PrunedSkeleton(dom, kept).is_full


@given(st.integers(0, 500), st.integers(1, 9))
def test_partition_sizes(n, groups):
    assign = partition_users(n, groups, np.random.default_rng(n))
    sizes = np.bincount(assign, minlength=groups)
    assert sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1


def test_estimate_tree_metadata(rng):
    dom = ValueDomain(16)
    tree = estimate_tree(_batch(rng.integers(0, 16, 4001), 16), dom, 1.0, rng)
    assert tree.properties[0] == 1.0 and tree.variances[0] == 0.0
    assert sorted(tree.meta["group_sizes"]) == [1, 2, 3, 4]
    assert sum(tree.meta["group_sizes"].values()) == 4001
    assert tree.meta.get("uneven_partition")
    for level, size in tree.meta["group_sizes"].items():
        assert np.allclose(tree.variances[level_slice(level)], oue_variance(1.0, size))
    assert (tree.provenance[1:] == Provenance.MEASURED).all()


def test_estimate_tree_unbiased():
    dom = ValueDomain(8)
    rng = np.random.default_rng(3)
    values = rng.integers(0, 8, 8000)
    batch = _batch(values, 8)
    truth = build_exact_tree(batch, dom).properties
    trees = np.array([estimate_tree(batch, dom, 2.0, rng).properties for _ in range(300)])
    se = np.sqrt(oue_variance(2.0, 8000 // 3) * 1.2 / 300)
    assert (np.abs(trees.mean(axis=0) - truth) < 4.5 * se).all()


def test_exact_oracle_gives_exact_tree(rng):
    dom = ValueDomain(10)
    batch = _batch(rng.integers(0, 10, 300), 10)
    est = estimate_tree(batch, dom, 0.5, rng, oracle=ExactOracle())
    assert np.allclose(est.properties, build_exact_tree(batch, dom).properties)


def test_pruned_nodes_are_halved(rng):
    dom = ValueDomain(8)
    kept = np.zeros(15, dtype=bool)
    kept[[0, 1, 2, 3, 4]] = True  # split root and node 1 only
    tree = estimate_tree(_batch(rng.integers(0, 8, 3000), 8), dom, 1.0, rng, structure=PrunedSkeleton(dom, kept))
    p = tree.properties
    assert p[5] == p[2] / 2 and p[6] == p[2] / 2
    assert p[13] == p[6] / 2
    assert tree.variances[5] == tree.variances[2] / 4
    assert tree.provenance[5] == Provenance.INFERRED_FROM_PARENT
    # only levels 1 and 2 measured, so users split in two
    assert sorted(tree.meta["group_sizes"]) == [1, 2]


def test_empty_batch(rng):
    dom = ValueDomain(4)
    tree = estimate_tree(_batch([], 4), dom, 1.0, rng)
    assert (tree.properties == 0).all()


def test_figure_one_cover():
    dom = ValueDomain(8)
    assert minimum_cover(dom, 0, 6) == [(1, 0), (2, 2), (3, 6)]  # e, c, f


@pytest.mark.parametrize("d", [8, 16, 32])
def test_cover_disjoint_exact_minimal(d):
    dom = ValueDomain(d)
    for v1 in range(d):
        for v2 in range(v1, d):
            cover = minimum_cover(dom, v1, v2)
            covered = [v for lv, i in cover for v in range(node_interval(dom, lv, i)[0], node_interval(dom, lv, i)[1] + 1)]
            assert len(covered) == len(set(covered))
            assert sorted(covered) == list(range(v1, v2 + 1))
            assert len(cover) == min_cover_size(dom.padded_size, v1, v2)


def test_cover_matches_subset_enumeration_d8():
    dom = ValueDomain(8)
    for v1 in range(8):
        for v2 in range(v1, 8):
            assert len(minimum_cover(dom, v1, v2)) == min_cover_by_enumeration(8, v1, v2)


def test_cover_rejects_padding_and_reversed():
    dom = ValueDomain(5)
    with pytest.raises(ValueError):
        minimum_cover(dom, 0, 5)
    with pytest.raises(ValueError):
        minimum_cover(dom, 3, 2)


def test_tree_answer_counts(rng):
    dom = ValueDomain(8)
    values = rng.integers(0, 8, 200)
    tree = build_exact_tree(_batch(values, 8), dom)
    assert tree_answer(tree, minimum_cover(dom, 0, 6)) == pytest.approx((values <= 6).sum())


def test_exact_tree_nodes_are_exact_ratios():
    rng = np.random.default_rng(11)
    dom = ValueDomain(13)
    values = rng.integers(0, 13, 997)
    tree = build_exact_tree(StreamBatch(1, np.arange(997), values, 13), dom)
    assert tree.properties[0] == 1.0
    counts = tree.properties * 997
    assert np.array_equal(counts, np.round(counts))
