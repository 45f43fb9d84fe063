# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loop kernels. Same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def softmax_rows(x):
    """Row softmax over the last axis: max-shift, exp, left-to-right sum, scale.

    The exponential itself goes through numpy's vectorised ``exp``.
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty_like(arr)
    if arr.size == 0:
        return out_arr
    cdef Py_ssize_t cols = arr.shape[arr.ndim - 1]
    cdef cnp.float64_t[:, ::1] src = arr.reshape(-1, cols)
    cdef cnp.float64_t[:, ::1] dst = out_arr.reshape(-1, cols)
    cdef Py_ssize_t rows = src.shape[0], i, j
    cdef double m, total, inv
    with nogil:
        for i in range(rows):
            m = src[i, 0]
            for j in range(1, cols):
                if src[i, j] > m:
                    m = src[i, j]
            for j in range(cols):
                dst[i, j] = src[i, j] - m
    np.exp(out_arr, out=out_arr)
    with nogil:
        for i in range(rows):
            total = 0.0
            for j in range(cols):
                total += dst[i, j]
            inv = 1.0 / total
            for j in range(cols):
                dst[i, j] = dst[i, j] * inv
    return out_arr


def softmax_rows_backward(p, grad_out, double scale=1.0):
    """scale * p * (g - sum(g * p)) row-wise."""
    pa = np.ascontiguousarray(p, dtype=np.float64)
    ga = np.ascontiguousarray(grad_out, dtype=np.float64)
    out_arr = np.empty_like(pa)
    if pa.size == 0:
        return out_arr
    cdef Py_ssize_t cols = pa.shape[pa.ndim - 1]
    cdef cnp.float64_t[:, ::1] pv = pa.reshape(-1, cols)
    cdef cnp.float64_t[:, ::1] gv = ga.reshape(-1, cols)
    cdef cnp.float64_t[:, ::1] dst = out_arr.reshape(-1, cols)
    cdef Py_ssize_t rows = pv.shape[0], i, j
    cdef double dot
    with nogil:
        for i in range(rows):
            dot = 0.0
            for j in range(cols):
                dot += gv[i, j] * pv[i, j]
            for j in range(cols):
                dst[i, j] = scale * pv[i, j] * (gv[i, j] - dot)
    return out_arr


def median_filter(x, Py_ssize_t window):
    cdef cnp.float64_t[::1] src = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0]
    cdef Py_ssize_t half = window // 2
    out_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    cdef cnp.float64_t[::1] buf = np.empty(window, dtype=np.float64)
    cdef Py_ssize_t i, k, j, idx
    cdef double v
    for i in range(n):
        # insertion sort of the edge-replicated window
        for k in range(window):
            idx = i - half + k
            if idx < 0:
                idx = 0
            elif idx >= n:
                idx = n - 1
            v = src[idx]
            j = k
            while j > 0 and buf[j - 1] > v:
                buf[j] = buf[j - 1]
                j -= 1
            buf[j] = v
        if window % 2:
            out[i] = buf[half]
        else:
            out[i] = 0.5 * (buf[half - 1] + buf[half])
    return out_arr


def label_runs(col):
    cdef cnp.int64_t[::1] c = np.ascontiguousarray(np.asarray(col) != 0, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t i, start = -1
    runs = []
    for i in range(n):
        if c[i]:
            if start < 0:
                start = i
        elif start >= 0:
            runs.append((start, i - start))
            start = -1
    if start >= 0:
        runs.append((start, n - start))
    return runs


def intersection_length(a_start, a_end, b_start, b_end):
    cdef cnp.float64_t[::1] as_ = np.ascontiguousarray(a_start, dtype=np.float64)
    cdef cnp.float64_t[::1] ae = np.ascontiguousarray(a_end, dtype=np.float64)
    cdef cnp.float64_t[::1] bs = np.ascontiguousarray(b_start, dtype=np.float64)
    cdef cnp.float64_t[::1] be = np.ascontiguousarray(b_end, dtype=np.float64)
    cdef Py_ssize_t i = 0, j = 0, na = as_.shape[0], nb = bs.shape[0]
    cdef double total = 0.0, lo, hi
    while i < na and j < nb:
        lo = as_[i] if as_[i] > bs[j] else bs[j]
        hi = ae[i] if ae[i] < be[j] else be[j]
        if hi > lo:
            total += hi - lo
        if ae[i] < be[j]:
            i += 1
        else:
            j += 1
    return total


def sweep_components(times, who, delta, Py_ssize_t n_ref, Py_ssize_t n_hyp, ref_to_hyp):
    cdef cnp.float64_t[::1] t_ = np.ascontiguousarray(times, dtype=np.float64)
    cdef cnp.int64_t[::1] w_ = np.ascontiguousarray(who, dtype=np.int64)
    cdef cnp.int64_t[::1] d_ = np.ascontiguousarray(delta, dtype=np.int64)
    cdef cnp.int64_t[::1] map_ = np.ascontiguousarray(ref_to_hyp, dtype=np.int64)
    cdef cnp.int64_t[::1] count = np.zeros(n_ref + n_hyp, dtype=np.int64)
    cdef Py_ssize_t n = t_.shape[0], k = 0, i, j
    cdef long nsz = 0, r, h, c, m
    cdef double t, length
    cdef double scored = 0.0, miss = 0.0, fa = 0.0, spkerr = 0.0
    while k < n:
        t = t_[k]
        while k < n and t_[k] == t:
            if w_[k] < 0:
                nsz += d_[k]
            else:
                count[w_[k]] += d_[k]
            k += 1
        if k >= n:
            break
        length = t_[k] - t
        if nsz > 0 or length <= 0.0:
            continue
        r = 0
        h = 0
        c = 0
        for i in range(n_ref):
            if count[i] > 0:
                r += 1
                m = map_[i]
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
        spkerr += ((r if r < h else h) - c) * length
    return scored, miss, fa, spkerr


def assign_min_cost(cost):
    cdef cnp.float64_t[:, ::1] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef double inf = float("inf")
    cdef cnp.float64_t[::1] u = np.zeros(n + 1)
    cdef cnp.float64_t[::1] v = np.zeros(n + 1)
    cdef cnp.float64_t[::1] minv = np.empty(n + 1)
    cdef cnp.int64_t[::1] row_of_col = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] way = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.uint8_t[::1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = row_of_col[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
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
