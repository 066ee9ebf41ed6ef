"""Pure-Python (numpy) fallback for the split-search kernel.

Selected at import time by :mod:`mvboost.trees` when the compiled extension is
unavailable.  Keeps the exact accumulation order and SSE formula of the Cython
kernel so both produce bit-identical splits.
"""

import numpy as np


def best_split_sorted(xs, ys, min_leaf):
    """Return (split_pos, sse_children) or None if no valid boundary.

    ``xs`` must be sorted ascending with ``ys`` reordered to match;
    ``split_pos`` is the number of rows routed left.
    """
    n = ys.shape[0]
    if n < 2 * min_leaf:
        return None
    c1 = np.cumsum(ys)
    c2 = np.cumsum(ys * ys)
    tot1 = c1[-1]
    tot2 = c2[-1]
    sizes = np.arange(1, n, dtype=float)
    left = c2[:-1] - c1[:-1] * c1[:-1] / sizes
    right = (tot2 - c2[:-1]) - (tot1 - c1[:-1]) * (tot1 - c1[:-1]) / (n - sizes)
    sse = left + right
    valid = xs[1:] != xs[:-1]
    if min_leaf > 1:
        valid &= (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not np.any(valid):
        return None
    sse = np.where(valid, sse, np.inf)
    pos = int(np.argmin(sse)) + 1  # first occurrence -> lowest threshold
    return pos, float(sse[pos - 1])
