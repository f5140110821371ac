# cython: language_level=3
"""Compiled per-path scans behind :mod:`bsdelab._kernels`.

Every routine here has a pure-Python twin in ``_scan_py.py`` with the same
signature and bit-identical output; the test-suite runs both.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t INDEX


def first_at_least(const double[:, :] values, double level,
                   const INDEX[:] start, const INDEX[:] end):
    """First index j in [start, end) with values[p, j] >= level, else end."""
    cdef Py_ssize_t n_paths = values.shape[0]
    cdef Py_ssize_t p
    cdef INDEX j, hit
    out = np.empty(n_paths, dtype=np.int64)
    cdef INDEX[:] res = out
    for p in range(n_paths):
        hit = end[p]
        for j in range(start[p], end[p]):
            if values[p, j] >= level:
                hit = j
                break
        res[p] = hit
    return out


def run_segments(const cnp.uint8_t[:, :] labels,
                 const INDEX[:] start, const INDEX[:] end):
    """Run-length encode interval labels path by path.

    ``labels[p, j]`` labels the grid interval [j, j+1]. Returns four int64
    arrays ``(path, label, left, right)`` listing maximal runs inside
    [start[p], end[p]] in path-major, time-minor order.
    """
    cdef Py_ssize_t n_paths = labels.shape[0]
    cdef Py_ssize_t p, total = 0, k = 0
    cdef INDEX j, left
    cdef cnp.uint8_t cur
    for p in range(n_paths):
        if end[p] > start[p]:
            total += 1
            for j in range(start[p] + 1, end[p]):
                if labels[p, j] != labels[p, j - 1]:
                    total += 1
    path_o = np.empty(total, dtype=np.int64)
    label_o = np.empty(total, dtype=np.int64)
    left_o = np.empty(total, dtype=np.int64)
    right_o = np.empty(total, dtype=np.int64)
    cdef INDEX[:] po = path_o
    cdef INDEX[:] lo = label_o
    cdef INDEX[:] le = left_o
    cdef INDEX[:] ri = right_o
    for p in range(n_paths):
        if end[p] <= start[p]:
            continue
        left = start[p]
        cur = labels[p, left]
        for j in range(start[p] + 1, end[p]):
            if labels[p, j] != cur:
                po[k] = p
                lo[k] = cur
                le[k] = left
                ri[k] = j
                k += 1
                left = j
                cur = labels[p, j]
        po[k] = p
        lo[k] = cur
        le[k] = left
        ri[k] = end[p]
        k += 1
    return path_o, label_o, left_o, right_o


def window_scan(const double[:, :] zabs, const double[:, :] znorm,
                const INDEX[:] start, const INDEX[:] end, double eps0):
    """Novikov window per path.

    entry = first j >= start with zabs >= eps0; cap = first j >= start with
    znorm >= 1/eps0; exit = first j > entry with zabs < eps0; all clipped to
    end. Returns ``(left, right)`` with right = min(exit, cap) and
    left = min(entry, right).
    """
    cdef Py_ssize_t n_paths = zabs.shape[0]
    cdef Py_ssize_t p
    cdef INDEX j, entry, cap, exit_, right
    cdef double upper = 1.0 / eps0
    left_o = np.empty(n_paths, dtype=np.int64)
    right_o = np.empty(n_paths, dtype=np.int64)
    cdef INDEX[:] lo = left_o
    cdef INDEX[:] ri = right_o
    for p in range(n_paths):
        entry = end[p]
        for j in range(start[p], end[p]):
            if zabs[p, j] >= eps0:
                entry = j
                break
        cap = end[p]
        for j in range(start[p], end[p]):
            if znorm[p, j] >= upper:
                cap = j
                break
        exit_ = end[p]
        for j in range(entry + 1, end[p]):
            if zabs[p, j] < eps0:
                exit_ = j
                break
        right = exit_ if exit_ < cap else cap
        ri[p] = right
        lo[p] = entry if entry < right else right
    return left_o, right_o
