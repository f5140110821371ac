import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from bsdelab import (AdaptedProcess, coverage_check, decompose, decompose_levels, integrate_abs, level_hitting,
                     make_grid, pathological_h, sample_brownian)
from bsdelab.decomposition import FLAT, INCREASING, segment_rows

monotone_paths = hnp.arrays(np.float64, (4, 17), elements=st.floats(0, 3)).map(lambda a: np.cumsum(a, axis=1))


def _step_H(steps, count=2):
    grid = make_grid(steps)
    h = (grid.points < 0.5).astype(float)
    return grid, integrate_abs(np.broadcast_to(h, (count, steps + 1)), grid)


@pytest.mark.parametrize("steps", [2, 4, 10, 100, 4096])
def test_step_fixture_exact(steps):
    grid, H = _step_H(steps)
    rep = decompose(H)
    for p in range(2):
        assert grid.points[rep.pi[p]].tolist() == [0.0, 0.5, 1.0]
        assert rep.labels[p].tolist() == [INCREASING, FLAT]


def test_flat_path_has_single_flat_segment():
    rep = decompose(np.zeros((1, 9)))
    assert rep.segments(0) == [(FLAT, 0, 8)]


def test_rejects_decreasing_H():
    with pytest.raises(ValueError):
        decompose(np.array([[0.0, 1.0, 0.5]]))
    with pytest.raises(ValueError):
        decompose(np.zeros((1, 5)), flat_tol=0.0)


@given(monotone_paths, st.floats(0, 60), st.floats(0, 60))
def test_level_hitting_monotone_and_matches_loop(H, r1, r2):
    lo, hi = sorted((r1, r2))
    a, b = level_hitting(H, lo), level_hitting(H, hi)
    assert np.all(a.time <= b.time)
    for p in range(H.shape[0]):
        idx = np.flatnonzero(H[p] >= lo)
        assert a.reached[p] == (idx.size > 0)
        assert a.time[p] == (idx[0] if idx.size else H.shape[1] - 1)


@given(monotone_paths, st.integers(0, 16))
def test_segments_partition_and_alternate(H, start):
    rep = decompose(H, start)
    for p in range(H.shape[0]):
        segs = rep.segments(p)
        lefts = [s[1] for s in segs]
        rights = [s[2] for s in segs]
        if start < 16:
            assert lefts[0] == start and rights[-1] == 16
            assert lefts[1:] == rights[:-1]
        labs = [s[0] for s in segs]
        assert all(a != b for a, b in zip(labs, labs[1:]))
        for lab, lo, hi in segs:
            dH = np.diff(H[p, lo:hi + 1])
            if lab == FLAT:
                assert np.all(dH <= rep.threshold[p])
            else:
                assert np.all(dH > rep.threshold[p])


@given(monotone_paths)
def test_decompose_idempotent(H):
    a, b = decompose(H), decompose(H)
    for field in ("seg_path", "seg_label", "seg_left", "seg_right"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


@given(monotone_paths, st.integers(0, 16))
def test_late_start_is_clipped_full_decomposition(H, start):
    full, late = decompose(H), decompose(H, start)
    for p in range(H.shape[0]):
        clipped = [(lab, max(lo, start), hi) for lab, lo, hi in full.segments(p) if hi > start]
        assert late.segments(p) == clipped


def test_pathological_requires_fine_grid():
    ens = sample_brownian(make_grid(32), 1, 2, seed=0)
    with pytest.raises(ValueError):
        pathological_h(ens, 3)


def test_pathological_dyadic_endpoints():
    grid = make_grid(4096)
    ens = sample_brownian(grid, 2, 20, seed=8)
    H = integrate_abs(pathological_h(ens, 3), grid)
    rep = decompose(H)
    want = [1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0]
    for p in range(20):
        ends = grid.points[rep.pi[p][1:]]
        assert len(ends) == len(want)
        assert np.all(np.abs(ends - want) <= grid.step + 1e-15)
        assert rep.labels[p].tolist() == [FLAT, INCREASING] * 3
    cov = coverage_check(decompose_levels(H, [0.0, 0.25, 0.5]), 3 * grid.step)
    assert cov.passed


def test_accumulation_index_finds_single_step_segment():
    H = np.array([[0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 3.0]])
    rep = decompose(H)
    assert rep.segments(0) == [(FLAT, 0, 1), (INCREASING, 1, 2), (FLAT, 2, 4), (INCREASING, 4, 6)]
    assert rep.accumulation_index().tolist() == [0]


def test_coverage_counts_union():
    H = np.cumsum(np.ones((1, 11)), axis=1)
    early = decompose(H, 0, end=4)
    late = decompose(H, 6)
    cov = coverage_check([early, late], 0.0)
    assert cov.covered[0] == pytest.approx(0.8)
    assert not cov.passed
    with pytest.raises(ValueError):
        coverage_check([])


def test_segment_rows_export():
    _, H = _step_H(4, 1)
    rows = segment_rows(decompose(H))
    assert rows == [(0, "increasing", 0, 2, 0.5), (0, "flat", 2, 4, 0.0)]


def test_accepts_adapted_process():
    grid = make_grid(8)
    H = AdaptedProcess(grid, np.cumsum(np.ones((3, 9)), axis=1))
    assert decompose(H).seg_path.tolist() == [0, 1, 2]
