import itertools

import numpy as np
import pytest

from mvboost import trees
from mvboost.trees import (
    EmptyTrainingSetError,
    Leaf,
    Split,
    TreeParams,
    fit_tree,
    predict_tree,
    predict_tree_batch,
    tree_from_dict,
    tree_to_dict,
)


def training_sse(tree, X, ys):
    preds = predict_tree_batch(tree, X)
    return float(np.sum((ys - preds) ** 2))


def exhaustive_best_split(X, ys, min_leaf=1):
    """Brute force over every (feature, midpoint) pair; ties to lowest feature
    index then lowest threshold."""
    best = None
    for feat in range(X.shape[1]):
        values = np.unique(X[:, feat])
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = 0.5 * (lo + hi)
            mask = X[:, feat] <= threshold
            nl, nr = mask.sum(), (~mask).sum()
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = np.sum((ys[mask] - ys[mask].mean()) ** 2) + np.sum(
                (ys[~mask] - ys[~mask].mean()) ** 2
            )
            if best is None or sse < best[2] - 1e-12:
                best = (feat, threshold, sse)
    return best


class TestFitTree:
    def test_constant_targets_single_leaf(self):
        tree = fit_tree(np.arange(8.0)[:, None], np.full(8, 7.0))
        assert isinstance(tree.root, Leaf)
        assert tree.root.value == 7.0

    def test_step_function_stump(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        ys = np.array([0.0, 0.0, 10.0, 10.0])
        tree = fit_tree(X, ys, TreeParams(max_depth=1))
        root = tree.root
        assert isinstance(root, Split)
        assert root.threshold == pytest.approx(1.5)
        assert root.left.value == 0.0
        assert root.right.value == 10.0

    def test_sse_monotone_in_depth(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(120, 2))
        ys = np.sin(X[:, 0]) + rng.normal(scale=0.1, size=120)
        sses = [
            training_sse(fit_tree(X, ys, TreeParams(max_depth=d)), X, ys)
            for d in range(1, 7)
        ]
        assert all(b <= a + 1e-12 for a, b in zip(sses, sses[1:]))

    def test_empty_input_rejected(self):
        with pytest.raises(EmptyTrainingSetError):
            fit_tree(np.empty((0, 1)), np.empty(0))

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 1))
        ys = rng.normal(size=40)
        tree = fit_tree(X, ys, TreeParams(max_depth=6, min_samples_leaf=5))

        def leaf_counts(node, idx):
            if isinstance(node, Leaf):
                return [idx.sum()]
            mask = X[:, node.feature_index] <= node.threshold
            return leaf_counts(node.left, idx & mask) + leaf_counts(node.right, idx & ~mask)

        assert min(leaf_counts(tree.root, np.ones(40, dtype=bool))) >= 5

    def test_depth_limit(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 1))
        ys = rng.normal(size=200)
        tree = fit_tree(X, ys, TreeParams(max_depth=3))

        def depth(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + max(depth(node.left), depth(node.right))

        assert depth(tree.root) <= 3

    def test_leaf_value_is_mean(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        ys = np.array([1.0, 3.0, 10.0, 14.0])
        tree = fit_tree(X, ys, TreeParams(max_depth=1))
        assert tree.root.left.value == pytest.approx(2.0)
        assert tree.root.right.value == pytest.approx(12.0)


class TestGreedyOracle:
    def test_root_split_matches_exhaustive_search(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 65))
            d = int(rng.integers(1, 4))
            X = np.round(rng.normal(size=(n, d)), 2)
            ys = rng.normal(size=n)
            oracle = exhaustive_best_split(X, ys)
            tree = fit_tree(X, ys, TreeParams(max_depth=1))
            if oracle is None:
                continue
            if isinstance(tree.root, Leaf):
                # greedy declined: only possible when no split improves
                parent = np.sum((ys - ys.mean()) ** 2)
                assert oracle[2] >= parent - 1e-9
                continue
            greedy_sse = training_sse(tree, X, ys)
            assert greedy_sse == pytest.approx(oracle[2], abs=1e-8)

    def test_two_level_matches_recursive_exhaustive(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(8, 40))
            X = np.round(rng.normal(size=(n, 2)), 1)
            ys = rng.normal(size=n)
            tree = fit_tree(X, ys, TreeParams(max_depth=2))
            # recompute what exhaustive recursion would score
            oracle = exhaustive_best_split(X, ys)
            if oracle is None or isinstance(tree.root, Leaf):
                continue
            mask = X[:, tree.root.feature_index] <= tree.root.threshold
            expected = 0.0
            for sub in (mask, ~mask):
                sub_best = exhaustive_best_split(X[sub], ys[sub])
                if sub_best is None:
                    expected += np.sum((ys[sub] - ys[sub].mean()) ** 2)
                else:
                    expected += min(
                        sub_best[2], np.sum((ys[sub] - ys[sub].mean()) ** 2)
                    )
            assert training_sse(tree, X, ys) == pytest.approx(expected, abs=1e-8)

    def test_tie_breaks_to_lowest_feature(self):
        # identical columns: split must use feature 0
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        ys = np.array([0.0, 0.0, 1.0, 1.0])
        tree = fit_tree(X, ys, TreeParams(max_depth=1))
        assert tree.root.feature_index == 0


class TestPredict:
    def test_single_leaf(self):
        tree = fit_tree(np.zeros((3, 1)), np.full(3, 2.5))
        assert predict_tree(tree, [123.0]) == 2.5

    def test_stump_routing(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        ys = np.array([0.0, 0.0, 10.0, 10.0])
        tree = fit_tree(X, ys, TreeParams(max_depth=1))
        assert predict_tree(tree, [1.4]) == 0.0
        assert predict_tree(tree, [1.6]) == 10.0
        assert predict_tree(tree, [1.5]) == 0.0  # equality routes left

    def test_full_depth_memorizes(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(32, 1))
        ys = rng.normal(size=32)
        tree = fit_tree(X, ys, TreeParams(max_depth=32))
        assert np.allclose(predict_tree_batch(tree, X), ys)

    def test_batch_matches_rowwise(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 3))
        ys = rng.normal(size=50)
        tree = fit_tree(X, ys, TreeParams(max_depth=4))
        batch = predict_tree_batch(tree, X)
        rows = np.array([predict_tree(tree, x) for x in X])
        assert np.array_equal(batch, rows)


class TestKernelParity:
    def test_fallback_matches_active_kernel(self):
        from mvboost import _splitcore_py

        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 200))
            xs = np.sort(np.round(rng.normal(size=n), 2))
            ys = np.ascontiguousarray(rng.normal(size=n))
            min_leaf = int(rng.integers(1, 4))
            a = trees._kernel.best_split_sorted(xs, ys, min_leaf)
            b = _splitcore_py.best_split_sorted(xs, ys, min_leaf)
            if a is None or b is None:
                assert a == b
            else:
                assert a[0] == b[0]
                assert a[1] == pytest.approx(b[1], rel=1e-12, abs=1e-12)


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 2))
        ys = rng.normal(size=60)
        tree = fit_tree(X, ys, TreeParams(max_depth=3))
        restored = tree_from_dict(tree_to_dict(tree))
        assert np.array_equal(
            predict_tree_batch(tree, X), predict_tree_batch(restored, X)
        )
        assert tree_to_dict(restored) == tree_to_dict(tree)
