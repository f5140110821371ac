"""Pure-Python per-path scans, the fallback for the compiled ``_scan``."""

import numpy as np


def _first(mask_row, offset, default):
    idx = np.flatnonzero(mask_row)
    return offset + int(idx[0]) if idx.size else default


def first_at_least(values, level, start, end):
    """First index j in [start, end) with values[p, j] >= level, else end."""
    out = np.empty(values.shape[0], dtype=np.int64)
    for p in range(values.shape[0]):
        s, e = int(start[p]), int(end[p])
        out[p] = _first(values[p, s:e] >= level, s, e)
    return out


def run_segments(labels, start, end):
    """Run-length encode interval labels path by path.

    See the compiled twin for the output layout.
    """
    path, label, left, right = [], [], [], []
    for p in range(labels.shape[0]):
        s, e = int(start[p]), int(end[p])
        if e <= s:
            continue
        row = labels[p, s:e]
        cuts = np.flatnonzero(row[1:] != row[:-1]) + 1
        bounds = np.concatenate(([0], cuts, [e - s]))
        for a, b in zip(bounds[:-1], bounds[1:]):
            path.append(p)
            label.append(int(row[a]))
            left.append(s + int(a))
            right.append(s + int(b))
    as_arr = lambda v: np.asarray(v, dtype=np.int64)
    return as_arr(path), as_arr(label), as_arr(left), as_arr(right)


def window_scan(zabs, znorm, start, end, eps0):
    """Novikov window per path; see the compiled twin."""
    n_paths = zabs.shape[0]
    left = np.empty(n_paths, dtype=np.int64)
    right = np.empty(n_paths, dtype=np.int64)
    upper = 1.0 / eps0
    for p in range(n_paths):
        s, e = int(start[p]), int(end[p])
        entry = _first(zabs[p, s:e] >= eps0, s, e)
        cap = _first(znorm[p, s:e] >= upper, s, e)
        exit_ = _first(zabs[p, entry + 1:e] < eps0, entry + 1, e) if entry + 1 < e else e
        r = min(exit_, cap)
        right[p] = r
        left[p] = min(entry, r)
    return left, right
