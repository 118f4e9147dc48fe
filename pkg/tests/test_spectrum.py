import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harperkit.params import Frequency, Potential
from harperkit.spectrum import (
    TWO_COS, Gap, IDSContext, SpectralScan, classify_energy, eigen_count, find_gaps, free_dos,
    free_ids, gap_label, ids, ids_slope, ids_with_error, scan, schrodinger, truncate,
)

GOLDEN = Frequency.golden()
AMO1 = Potential.cosine(1.0)


def random_banded(rng, n, b, complex_hop):
    bands = np.zeros((b + 1, n), dtype=complex if complex_hop else float)
    bands[0] = rng.normal(size=n)
    for k in range(1, b + 1):
        vals = rng.normal(size=n - k)
        if complex_hop:
            vals = vals + 1j * rng.normal(size=n - k)
        bands[k, : n - k] = vals
    return bands


def dense_from_bands(bands):
    n = bands.shape[1]
    A = np.diag(bands[0]).astype(bands.dtype)
    for k in range(1, bands.shape[0]):
        d = bands[k, : n - k]
        A += np.diag(d, -k) + np.diag(np.conj(d), k)
    return A


# truncate ---------------------------------------------------------------------

def test_truncate_free_3x3():
    T = truncate(TWO_COS, Potential.zero(), GOLDEN, 0.0, 1)
    assert np.allclose(T.to_dense(), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def test_truncate_amo_diagonal():
    T = truncate(TWO_COS, AMO1, GOLDEN, 0.0, 1)
    w = GOLDEN.value
    assert np.allclose(T.diagonal, [math.cos(-2 * math.pi * w), 1.0, math.cos(2 * math.pi * w)])


def test_truncate_dual_hopping():
    T = truncate(Potential.cosine(0.8), TWO_COS, GOLDEN, 0.3, 5)
    assert T.band == 1
    D = T.to_dense()
    assert np.allclose(np.diag(D, 1), 0.4)
    n = np.arange(-5, 6)
    assert np.allclose(np.diag(D), 2 * np.cos(2 * np.pi * GOLDEN.value * n + 0.3))


def test_truncate_band_tol():
    W = Potential.trig({1: 1.0, 3: 1e-6})
    assert truncate(W, AMO1, GOLDEN, 0.0, 4).band == 3
    T = truncate(W, AMO1, GOLDEN, 0.0, 4, band_tol=1e-5)
    assert T.band == 1 and T.dropped == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        truncate(W, AMO1, GOLDEN, 0.0, 4, band_tol=10.0)
    with pytest.raises(ValueError):
        truncate(W, AMO1, GOLDEN, 0.0, 0)


# eigenCount ---------------------------------------------------------------------

def test_eigen_count_free_3x3():
    T = truncate(TWO_COS, Potential.zero(), GOLDEN, 0.0, 1)
    assert eigen_count(T, 0.0) == 2
    g = T.gershgorin()
    assert eigen_count(T, -g - 1e-9) == 0
    assert eigen_count(T, g + 1e-9) == 3


@pytest.mark.parametrize("complex_hop", [False, True])
def test_eigen_count_matches_dense_solver(complex_hop):
    from harperkit import _kernels
    rng = np.random.default_rng(7 + complex_hop)
    for _ in range(1500):
        n = int(rng.integers(2, 13))
        b = int(rng.integers(1, min(3, n - 1) + 1))
        bands = random_banded(rng, n, b, complex_hop)
        ev = np.linalg.eigvalsh(dense_from_bands(bands))
        probes = rng.uniform(ev.min() - 1, ev.max() + 1, size=8)
        # keep probes away from eigenvalues so the oracle count is unambiguous
        probes = probes[np.min(np.abs(probes[:, None] - ev[None, :]), axis=1) > 1e-9]
        got = _kernels.banded_inertia(np.ascontiguousarray(bands), probes, _kernels.PIVOT_SHIFT)
        want = (ev[None, :] <= probes[:, None]).sum(axis=1)
        assert np.array_equal(got, want)


# ids ------------------------------------------------------------------------------

def test_free_ids_examples():
    Z = Potential.zero()
    assert ids(TWO_COS, Z, GOLDEN, None, 500, 0.0) == pytest.approx(0.5, abs=2e-3)
    assert ids(TWO_COS, Z, GOLDEN, None, 500, 2.1) == 1.0
    assert ids(TWO_COS, Z, GOLDEN, None, 500, 1.0) == pytest.approx(2 / 3, abs=5e-3)
    assert free_ids(1.0) == pytest.approx(2 / 3)


def test_ids_rejects_small_n():
    with pytest.raises(ValueError):
        ids(TWO_COS, AMO1, GOLDEN, None, 7, 0.0)


def test_ids_matches_dense_count():
    a = np.linspace(-3, 3, 41)
    T = schrodinger(AMO1, GOLDEN, 0.77, 60)
    ev = np.linalg.eigvalsh(T.to_dense())
    want = (ev[None, :] <= a[:, None]).sum(axis=1) / T.size
    assert np.allclose(ids(TWO_COS, AMO1, GOLDEN, [0.77], 60, a), want)


def test_ids_threads_identical():
    a = np.linspace(-2.5, 2.5, 31)
    one = ids(TWO_COS, AMO1, GOLDEN, None, 200, a)
    many = ids(TWO_COS, AMO1, GOLDEN, None, 200, a, threads=4)
    assert np.array_equal(one, many)


def test_ids_error_heuristic_nonnegative():
    val, err = ids_with_error(TWO_COS, AMO1, GOLDEN, None, 200, np.linspace(-3, 3, 13))
    assert np.all(err >= 0) and np.all((val >= 0) & (val <= 1))


@given(st.floats(-3, 3), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_ids_nondecreasing(a, da, phi):
    k = ids(TWO_COS, AMO1, GOLDEN, [phi], 50, np.array([a, a + da]))
    assert k[0] <= k[1]


@given(st.floats(-2, 2), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_ids_shift_equivariance(s, a, phi):
    V = Potential.trig({1: 0.7, 2: 0.2})
    k1 = ids(TWO_COS, V, GOLDEN, [phi], 40, a)
    k2 = ids(TWO_COS, V.shifted(s), GOLDEN, [phi], 40, a + s)
    # exact up to rounding when an eigenvalue sits within 1e-12 of a
    T = schrodinger(V, GOLDEN, phi, 40)
    if np.min(np.abs(np.linalg.eigvalsh(T.to_dense()) - a)) > 1e-9:
        assert k1 == k2


# scan and gaps ----------------------------------------------------------------------

def test_scan_free():
    s = scan(TWO_COS, Potential.zero(), GOLDEN, np.linspace(-3, 3, 61), 200)
    below, above = s.grid < -2, s.grid > 2
    assert np.all(s.ids[below] == 0) and np.all(s.ids[above] == 1)
    assert np.all(np.diff(s.ids) >= 0)
    gaps = find_gaps(s, omega=GOLDEN)
    assert [g.idsValue for g in gaps] == [0.0, 1.0]
    assert [g.label for g in gaps] == [0, 0]


def test_scan_amo_zero_equals_free():
    g = np.linspace(-3, 3, 61)
    a = scan(TWO_COS, Potential.cosine(0.0), GOLDEN, g, 100)
    b = scan(TWO_COS, Potential.zero(), GOLDEN, g, 100)
    assert np.array_equal(a.ids, b.ids)


def test_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        scan(TWO_COS, AMO1, GOLDEN, [0.0, -1.0], 50)


def test_scan_cocycle_only_for_schrodinger():
    with pytest.raises(ValueError):
        scan(Potential.cosine(1.0), TWO_COS, GOLDEN, [0.0, 1.0], 50, cocycle=True)
    s = scan(TWO_COS, AMO1, GOLDEN, [0.0, 1.0], 50, cocycle=True, steps=2000)
    assert s.lyap.shape == (2,) and s.rot.shape == (2,)
    assert len(list(s.rows())) == 2


@pytest.fixture(scope="module")
def amo_scan():
    return scan(TWO_COS, AMO1, GOLDEN, np.linspace(-3, 3, 601), 400)


def test_amo_main_gap_label(amo_scan):
    assert np.all(np.diff(amo_scan.ids) >= 0)
    gaps = [g for g in find_gaps(amo_scan, omega=GOLDEN) if 0 < g.idsValue < 1]
    widest = max(gaps, key=lambda g: g.width)
    assert widest.label in (1, -1)
    assert min(abs(widest.idsValue - GOLDEN.value), abs(widest.idsValue - (1 - GOLDEN.value))) < 5e-3
    for g in gaps:
        assert g.lo < g.hi


def test_gap_plateaus_stable_under_doubling(amo_scan):
    big = [g for g in find_gaps(amo_scan, omega=GOLDEN) if 0 < g.idsValue < 1 and g.width > 0.05]
    assert big
    for g in big:
        mid = 0.5 * (g.lo + g.hi)
        assert ids(TWO_COS, AMO1, GOLDEN, None, 800, mid) == pytest.approx(g.idsValue, abs=2e-3)


def test_refined_edges_bracket_count_jump(amo_scan):
    gaps = [g for g in find_gaps(amo_scan, omega=GOLDEN) if 0 < g.idsValue < 1 and g.width > 0.05]
    for g in gaps:
        inside = ids(TWO_COS, AMO1, GOLDEN, None, 400, np.array([g.lo + 1e-8, g.hi - 1e-8]))
        outside = ids(TWO_COS, AMO1, GOLDEN, None, 400, np.array([g.lo - 1e-3, g.hi + 1e-3]))
        # bisection stops where the count leaves the plateau band of +-tol
        assert inside[1] - inside[0] <= 2 * 2.5 / 801
        assert outside[1] - outside[0] > inside[1] - inside[0]


def test_collapsed_flag_synthetic():
    grid = np.linspace(0, 1, 11)
    vals = np.array([0, 0.1, 0.2, 0.3, 0.4, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0])
    s = SpectralScan(grid, vals, np.zeros(11), meta={"N": 1000})
    gaps = find_gaps(s, plateau_tol=1e-6, refine=False)
    (g,) = gaps
    assert g.idsValue == pytest.approx(0.4)
    assert not g.collapsed
    s2 = SpectralScan(grid, np.linspace(0, 1, 11), np.zeros(11), meta={"N": 1000})
    assert find_gaps(s2, plateau_tol=1e-6, refine=False) == []


def test_gap_label_examples():
    assert gap_label(0.0, GOLDEN) == 0
    assert gap_label(1.0, GOLDEN) == 0
    assert gap_label(0.618, GOLDEN) in (1, -1)
    assert gap_label(0.236, GOLDEN) in (2, -2)
    assert gap_label(Gap(0, 1, 0.382), GOLDEN) in (1, -1)
    assert gap_label(0.5, GOLDEN, kmax=3, tol=1e-4) is None


@given(st.integers(-30, 30))
def test_gap_label_recovers_k(k):
    x = (k * GOLDEN.value) % 1.0
    lab = gap_label(x, GOLDEN, kmax=40, tol=1e-9)
    assert abs(lab) == abs(k)


# slopes and classification --------------------------------------------------------------

def test_ids_slope_inside_gap_and_free_density():
    ctx = IDSContext(AMO1, GOLDEN)
    gaps = [g for g in find_gaps(scan(TWO_COS, AMO1, GOLDEN, np.linspace(-3, 3, 301), 400), omega=GOLDEN)
            if 0 < g.idsValue < 1]
    g = max(gaps, key=lambda g: g.width)
    assert ids_slope(g.lo + 0.2 * g.width, g.hi - 0.2 * g.width, ctx) < 1e-5
    # finite truncations see only the isolated boundary states inside the gap
    count = IDSContext(AMO1, GOLDEN, method="count", N=400)
    assert ids_slope(g.lo + 0.2 * g.width, g.hi - 0.2 * g.width, count) < 3 / 801
    free = IDSContext(Potential.zero(), GOLDEN, steps=2_000_000)
    assert ids_slope(-0.05, 0.05, free) == pytest.approx(free_dos(0.0), rel=1e-2)
    with pytest.raises(ValueError):
        ids_slope(0.1, 0.1, free)


def test_classify_energy_free_and_gap():
    h = np.logspace(-1, -3, 5)
    res = classify_energy(0.0, Potential.zero(), GOLDEN, h, IDSContext(Potential.zero(), GOLDEN, steps=1_000_000))
    assert res.kind == "SmoothPoint"
    res = classify_energy(2.5, Potential.zero(), GOLDEN, [0.2, 0.1, 0.05])
    assert res.kind == "GapInterior"
    with pytest.raises(ValueError):
        classify_energy(0.0, Potential.zero(), GOLDEN, [0.1, 0.2, 0.3])


def test_classify_energy_free_edge_is_sqrt():
    h = np.logspace(-2, -5, 6)
    ctx = IDSContext(Potential.zero(), GOLDEN, steps=2_000_000)
    res = classify_energy(2.0, Potential.zero(), GOLDEN, h, ctx)
    assert res.kind == "GapEdgeSqrt"
    assert res.exponent == pytest.approx(-0.5, abs=0.05)


def test_classify_energy_amo_main_gap_edge():
    from harperkit.duality import refine_gap_edge
    V = Potential.cosine(0.5)
    edge = refine_gap_edge(V, GOLDEN, 0.5010, 1)
    res = classify_energy(edge, V, GOLDEN, np.logspace(-3, -6, 7), IDSContext(V, GOLDEN, steps=1_000_000))
    assert res.kind == "GapEdgeSqrt"
    assert res.exponent == pytest.approx(-0.5, abs=0.05)
