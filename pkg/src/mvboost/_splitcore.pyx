# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-search kernel for regression tree growth.

Given one feature column pre-sorted ascending (with targets reordered to
match), scan every boundary between distinct feature values and return the
boundary minimizing the summed left/right SSE.  Ties resolve to the lowest
threshold.  Must stay numerically identical to the pure-Python fallback in
``_splitcore_py``: same accumulation order, same SSE formula.
"""


def best_split_sorted(double[::1] xs, double[::1] ys, int min_leaf):
    """Return (split_pos, sse_children) or None if no valid boundary.

    ``split_pos`` is the number of rows routed left; the threshold is the
    midpoint of xs[split_pos - 1] and xs[split_pos].
    """
    cdef Py_ssize_t n = ys.shape[0]
    cdef Py_ssize_t i, best_pos = -1
    cdef double c1 = 0.0, c2 = 0.0, tot1 = 0.0, tot2 = 0.0
    cdef double left, right, sse, best_sse = 0.0
    cdef double nl, nr

    for i in range(n):
        tot1 += ys[i]
        tot2 += ys[i] * ys[i]

    for i in range(1, n):
        c1 += ys[i - 1]
        c2 += ys[i - 1] * ys[i - 1]
        if i < min_leaf or n - i < min_leaf:
            continue
        if xs[i] == xs[i - 1]:
            continue
        nl = <double> i
        nr = <double> (n - i)
        left = c2 - c1 * c1 / nl
        right = (tot2 - c2) - (tot1 - c1) * (tot1 - c1) / nr
        sse = left + right
        if best_pos < 0 or sse < best_sse:
            best_sse = sse
            best_pos = i

    if best_pos < 0:
        return None
    return best_pos, best_sse
