"""CART-style regression trees used as the boosting base learner.

Growth is greedy top-down on SSE reduction.  Split candidates are midpoints
between consecutive distinct sorted values of each feature; rows with feature
value equal to the threshold route left.  Ties between candidate splits break
to the lowest feature index, then the lowest threshold, so fits are fully
reproducible.  There is no feature or row subsampling.

The per-feature scan over sorted targets is the hot inner loop of the whole
package; it runs in a compiled Cython kernel when available, with a numpy
fallback selected at import time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from . import _splitcore as _kernel

    HAVE_COMPILED_KERNEL = True
except ImportError:  # pragma: no cover - depends on build environment
    from . import _splitcore_py as _kernel

    HAVE_COMPILED_KERNEL = False

# Relative slack below which an SSE improvement counts as zero and growth stops.
_GAIN_TOL = 1e-12


class EmptyTrainingSetError(ValueError):
    """fit_tree called with no rows or no features."""


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 3
    min_samples_leaf: int = 1
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "Split | Leaf"
    right: "Split | Leaf"


@dataclass(frozen=True)
class RegressionTree:
    root: Split | Leaf
    n_features: int


def _node_sse(ys):
    mean = ys.mean()
    return float(np.sum((ys - mean) ** 2))


def _best_split(X, ys, min_leaf):
    """Best (feature, threshold, sse_children) over all features, or None."""
    best = None
    for feat in range(X.shape[1]):
        col = X[:, feat]
        order = np.argsort(col, kind="stable")
        xs = np.ascontiguousarray(col[order])
        ys_sorted = np.ascontiguousarray(ys[order])
        found = _kernel.best_split_sorted(xs, ys_sorted, min_leaf)
        if found is None:
            continue
        pos, sse = found
        if best is None or sse < best[2]:
            threshold = 0.5 * (xs[pos - 1] + xs[pos])
            best = (feat, float(threshold), sse)
    return best


def _grow(X, ys, params, depth):
    n = ys.shape[0]
    if (
        depth >= params.max_depth
        or n < params.min_samples_split
        or n < 2 * params.min_samples_leaf
    ):
        return Leaf(float(ys.mean()))
    parent_sse = _node_sse(ys)
    if parent_sse <= _GAIN_TOL * max(1.0, float(np.sum(ys * ys))):
        return Leaf(float(ys.mean()))
    best = _best_split(X, ys, params.min_samples_leaf)
    if best is None:
        return Leaf(float(ys.mean()))
    feat, threshold, sse_children = best
    if parent_sse - sse_children <= _GAIN_TOL * max(1.0, parent_sse):
        return Leaf(float(ys.mean()))
    mask = X[:, feat] <= threshold
    if not mask.any() or mask.all():  # midpoint rounded onto a data value
        return Leaf(float(ys.mean()))
    return Split(
        feature_index=feat,
        threshold=threshold,
        left=_grow(X[mask], ys[mask], params, depth + 1),
        right=_grow(X[~mask], ys[~mask], params, depth + 1),
    )


def fit_tree(X, targets, params: TreeParams | None = None, rng_seed=None) -> RegressionTree:
    """Fit one scalar-output regression tree by greedy SSE minimization.

    ``rng_seed`` is accepted for interface uniformity; growth is fully
    deterministic (no subsampling), so it is unused.
    """
    params = params or TreeParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ys = np.asarray(targets, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyTrainingSetError("fit_tree requires at least one row and one feature")
    if X.shape[0] != ys.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]}, targets {ys.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(ys))):
        raise ValueError("fit_tree inputs must be finite")
    return RegressionTree(root=_grow(X, ys, params, 0), n_features=X.shape[1])


def predict_tree(tree: RegressionTree, x) -> float:
    """Deterministic leaf lookup for one feature row (<= routes left)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    node = tree.root
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node.value


def predict_tree_batch(tree: RegressionTree, X) -> np.ndarray:
    """Vectorized prediction for an (n, d) feature matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0])
    _predict_into(tree.root, X, np.arange(X.shape[0]), out)
    return out


def _predict_into(node, X, idx, out):
    if isinstance(node, Leaf):
        out[idx] = node.value
        return
    mask = X[idx, node.feature_index] <= node.threshold
    _predict_into(node.left, X, idx[mask], out)
    _predict_into(node.right, X, idx[~mask], out)


def tree_to_dict(tree: RegressionTree) -> dict:
    """JSON-serializable nested-node form (see model persistence)."""
    return {"n_features": tree.n_features, "root": _node_to_dict(tree.root)}


def _node_to_dict(node):
    if isinstance(node, Leaf):
        return {"leaf": node.value}
    return {
        "feature": node.feature_index,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def tree_from_dict(data: dict) -> RegressionTree:
    return RegressionTree(root=_node_from_dict(data["root"]), n_features=data["n_features"])


def _node_from_dict(data):
    if "leaf" in data:
        return Leaf(float(data["leaf"]))
    return Split(
        feature_index=int(data["feature"]),
        threshold=float(data["threshold"]),
        left=_node_from_dict(data["left"]),
        right=_node_from_dict(data["right"]),
    )
