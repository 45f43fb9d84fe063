"""Pure-Python implementations of the loop kernels.

Behaviour must match ``_kernels.pyx`` exactly; the test suite runs both.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(p, grad_out, scale=1.0):
    return scale * p * (grad_out - (grad_out * p).sum(axis=-1, keepdims=True))


def median_filter(x, window):
    x = np.asarray(x, dtype=np.float64)
    half = window // 2
    padded = np.concatenate([np.repeat(x[:1], half), x, np.repeat(x[-1:], half)])
    return np.median(sliding_window_view(padded, window), axis=1)


def label_runs(col):
    """(start, length) of every maximal run of non-zero entries."""
    runs = []
    start = -1
    for i, v in enumerate(col):
        if v:
            if start < 0:
                start = i
        elif start >= 0:
            runs.append((start, i - start))
            start = -1
    if start >= 0:
        runs.append((start, len(col) - start))
    return runs


def intersection_length(a_start, a_end, b_start, b_end):
    """Total overlap of two sorted, internally disjoint interval lists."""
    i = j = 0
    total = 0.0
    na, nb = len(a_start), len(b_start)
    while i < na and j < nb:
        lo = max(a_start[i], b_start[j])
        hi = min(a_end[i], b_end[j])
        if hi > lo:
            total += hi - lo
        if a_end[i] < b_end[j]:
            i += 1
        else:
            j += 1
    return total


def sweep_components(times, who, delta, n_ref, n_hyp, ref_to_hyp):
    """Accumulate (scored, miss, fa, spkerr) over an event list sorted by time.

    ``who`` indexes ref speakers in [0, n_ref), hyp speakers in
    [n_ref, n_ref + n_hyp) and no-score zones as -1.
    """
    count = [0] * (n_ref + n_hyp)
    nsz = 0
    scored = miss = fa = spkerr = 0.0
    n = len(times)
    k = 0
    while k < n:
        t = times[k]
        while k < n and times[k] == t:
            w = who[k]
            if w < 0:
                nsz += delta[k]
            else:
                count[w] += delta[k]
            k += 1
        if k >= n:
            break
        length = times[k] - t
        if nsz > 0 or length <= 0.0:
            continue
        r = h = c = 0
        for i in range(n_ref):
            if count[i] > 0:
                r += 1
                m = ref_to_hyp[i]
                if m >= 0 and count[n_ref + m] > 0:
                    c += 1
        for j in range(n_hyp):
            if count[n_ref + j] > 0:
                h += 1
        scored += r * length
        if r > h:
            miss += (r - h) * length
        else:
            fa += (h - r) * length
        spkerr += (min(r, h) - c) * length
    return scored, miss, fa, spkerr


def assign_min_cost(cost):
    """Minimum-cost perfect matching on a square matrix (shortest augmenting paths).

    Returns ``col_of_row``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    row_of_col = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while True:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row
