import math

import numpy as np
import pytest

from harperkit.cocycle import Cocycle, matrix_rotation_number, rotation_number
from harperkit.duality import BlochWave, localized_states
from harperkit.params import Frequency, Potential, fold_mod1
from harperkit.reducibility import (
    DegenerateY, ParityError, SmallDivisorOverflow, build_y, constant_conjugation,
    conjugation_residual, dependence_test, predicted_rotation, real_solution, realify,
    recomposition_residual, reduce_bloch_wave, resonant_reduce, theta_grid, verify_conjugation,
    winding_degree,
)
from harperkit.spectrum import IDSContext

GOLDEN = Frequency.golden()
AMO05 = Potential.cosine(0.5)


def plane_wave(m, phi, N=4):
    coeffs = np.zeros(2 * N + 1, dtype=complex)
    coeffs[N + m] = 1.0
    return BlochWave(2 * math.cos(2 * math.pi * GOLDEN.value * m + phi), phi, coeffs)


@pytest.fixture(scope="module")
def generic_states():
    return localized_states(AMO05, GOLDEN, 1.0, 200)


@pytest.fixture(scope="module")
def edge_states():
    """phi = 0 dual states peaked near the centre: even-label gap edges."""
    out = []
    for a, w in localized_states(AMO05, GOLDEN, 0.0, 200):
        peak = int(np.argmax(np.abs(w.coeffs))) - w.N
        if abs(peak) <= 1:
            out.append((a, peak, w))
    return out


# buildY ----------------------------------------------------------------------------------

@pytest.mark.parametrize("m,phi", [(0, 0.7), (2, 1.3), (-3, 2.9)])
def test_build_y_plane_wave(m, phi):
    c = build_y(plane_wave(m, phi), Potential.zero(), GOLDEN, M=64)
    assert c.residual <= 1e-10
    assert c.detStats[1] <= 1e-12
    assert np.allclose(c.B, np.diag([np.exp(1j * phi), np.exp(-1j * phi)]))


def test_build_y_amo(generic_states):
    for a, w in generic_states[::25]:
        c = build_y(w, AMO05, GOLDEN)
        assert c.residual <= 1e-6 and c.detStats[1] <= 1e-6


def test_build_y_conjugate_pair(generic_states):
    a, w = generic_states[40]
    c1 = build_y(w, AMO05, GOLDEN)
    c2 = build_y(w.conjugate(), AMO05, GOLDEN)
    assert c2.residual == pytest.approx(c1.residual, abs=1e-12)
    assert np.allclose(c2.B, np.diag([np.exp(-1j * w.phi), np.exp(1j * w.phi)]))


def test_build_y_degenerate_at_resonant_phase():
    with pytest.raises(DegenerateY):
        build_y(plane_wave(0, 0.0), Potential.zero(), GOLDEN, M=64)


# dependenceTest ----------------------------------------------------------------------------

def test_dependence_examples():
    d = dependence_test(0.0, GOLDEN)
    assert d.dependent and (d.k, d.j) == (0, 0)
    d = dependence_test(math.pi * GOLDEN.value, GOLDEN)
    assert d.dependent and (d.k, d.j) == (1, 0)
    d = dependence_test(math.pi * (3 - 4 * GOLDEN.value), GOLDEN)
    assert d.dependent and (d.k, d.j) == (-4, 3)
    assert not dependence_test(1.0, GOLDEN).dependent


def test_independent_phase_has_nondegenerate_y(generic_states):
    for a, w in generic_states[::30]:
        c = build_y(w, AMO05, GOLDEN)
        scale = np.max(np.abs(c.Z)) ** 2
        assert abs(c.detStats[0]) > 1e-6 * scale


# realify -----------------------------------------------------------------------------------

def test_realify_quarter_rotation():
    r = realify(build_y(plane_wave(0, math.pi / 2), Potential.zero(), GOLDEN, M=64))
    # Im det Y > 0 here, so the wave is conjugated and the quarter turn runs the other way
    assert np.allclose(r.B, [[0, -1], [1, 0]], atol=1e-15)
    assert r.residual <= 1e-12
    assert r.detStats[0] == pytest.approx(1.0) and r.detStats[1] <= 1e-12
    assert predicted_rotation(r) == pytest.approx(0.25)


def test_realify_requires_raw():
    r = realify(build_y(plane_wave(1, 1.0), Potential.zero(), GOLDEN, M=64))
    with pytest.raises(ValueError):
        realify(r)


def test_realify_rotation_of_b_matches_phi():
    r = realify(build_y(plane_wave(1, 1.0), Potential.zero(), GOLDEN, M=64))
    rot_b = matrix_rotation_number(r.B, GOLDEN, N=500, fold=False)
    assert rot_b % 1.0 == pytest.approx((-r.phi / (2 * math.pi)) % 1.0, abs=1e-12)


def test_realify_amo(generic_states):
    for a, w in generic_states[::20]:
        r = realify(build_y(w, AMO05, GOLDEN))
        assert r.kind == "Rotation"
        assert r.residual <= 1e-6
        assert r.info["imag_part"] <= 1e-10
        assert abs(r.detStats[0] - 1) <= 1e-8 and r.detStats[1] <= 1e-8
        assert verify_conjugation(r)["max"] <= 1e-6
        assert recomposition_residual(r) <= 1e-6


def test_predicted_rotation_matches_orbit(generic_states):
    for a, w in generic_states[::40]:
        r = realify(build_y(w, AMO05, GOLDEN))
        measured = rotation_number(Cocycle(a, AMO05, GOLDEN), N=400_000)
        assert fold_mod1(predicted_rotation(r)) == pytest.approx(measured, abs=1e-4)


def test_corrupted_z_is_detected(generic_states):
    a, w = generic_states[10]
    r = realify(build_y(w, AMO05, GOLDEN))
    good = r.zfunc

    def bad(theta):
        Z = good(theta).copy()
        Z[..., 0, 1] += 1e-2
        return Z

    res, _ = conjugation_residual(bad, r.B, AMO05, a, GOLDEN, theta_grid(256))
    assert res >= 1e-3


def test_constant_conjugation_free_elliptic():
    a = 0.8
    t = math.acos(a / 2)
    A = np.array([[a, -1.0], [1.0, 0.0]])
    vals, vecs = np.linalg.eig(A)
    c = constant_conjugation(vecs, np.diag(vals), Potential.zero(), a, GOLDEN)
    assert c.residual <= 1e-12
    assert np.allclose(sorted(np.angle(vals)), [-t, t])


def test_winding_degree_of_rotating_frame():
    def z(theta, k=3):
        th = np.asarray(theta)
        out = np.zeros(th.shape + (2, 2))
        out[..., 0, 0] = np.cos(k * th)
        out[..., 1, 0] = np.sin(k * th)
        out[..., 0, 1] = -np.sin(k * th)
        out[..., 1, 1] = np.cos(k * th)
        return out
    assert winding_degree(z) == 3
    assert winding_degree(lambda t: z(t, -2)) == -2


# resonant reduction ------------------------------------------------------------------------

def test_resonant_reduce_free_parabolic():
    c = resonant_reduce(np.array([1.0 + 0j]), Potential.zero(), GOLDEN, 2.0, M=64, Kcut=8)
    assert c.kind == "Triangular"
    assert c.c == pytest.approx(-1.0, abs=1e-14)
    assert c.residual <= 1e-14
    assert c.detStats[0] == pytest.approx(1.0) and c.detStats[1] <= 1e-14
    Z = c.zfunc(np.linspace(0, 6, 7))
    assert np.allclose(Z, Z[0])


def test_free_bottom_edge_needs_doubled_circle():
    w = plane_wave(0, math.pi)
    assert w.a == pytest.approx(-2.0)
    with pytest.raises(ParityError):
        real_solution(w, GOLDEN)
    with pytest.raises(ParityError):
        reduce_bloch_wave(w, Potential.zero(), GOLDEN)


def test_odd_label_edge_rejected():
    # phi = pi omega: label-1 edges, whose real solutions live on the doubled circle
    states = localized_states(AMO05, GOLDEN, math.pi * GOLDEN.value, 200)
    with pytest.raises(ParityError):
        reduce_bloch_wave(states[0][1], AMO05, GOLDEN)


def test_resonant_reduce_rejects_non_solution_and_complex():
    with pytest.raises(ValueError):
        resonant_reduce(np.array([1.0 + 0j]), Potential.zero(), GOLDEN, 1.0, M=64, Kcut=8)
    with pytest.raises(ValueError):
        resonant_reduce(np.array([0, 1.0, 1j]), Potential.zero(), GOLDEN, 2.0, M=64, Kcut=8)
    with pytest.raises(ValueError):
        resonant_reduce(np.array([1.0 + 0j]), Potential.zero(), GOLDEN, 2.0, M=16, Kcut=8)


def test_small_divisor_guard(edge_states):
    a, peak, w = edge_states[0]
    f = real_solution(w, GOLDEN)
    with pytest.raises(SmallDivisorOverflow) as e:
        resonant_reduce(f, AMO05, GOLDEN, a, div_tol=1.0)
    assert "k" in e.value.payload


def test_amo_gap_edge_triangular(edge_states):
    assert len(edge_states) == 3
    for a, peak, w in edge_states:
        c = reduce_bloch_wave(w, AMO05, GOLDEN)
        assert c.kind == "Triangular"
        assert abs(c.c) > 1e-3
        assert c.residual <= 1e-5
        assert verify_conjugation(c)["max"] <= 1e-5
        assert recomposition_residual(c) <= 1e-5
        assert abs(c.detStats[0] - 1) <= 1e-8


def test_gap_side_follows_sign_of_c(edge_states):
    ctx = IDSContext(AMO05, GOLDEN, steps=400_000)
    h = 1e-3
    for a, peak, w in edge_states:
        c = reduce_bloch_wave(w, AMO05, GOLDEN).c
        k = ctx(np.array([a - h, a, a + h]))
        left, right = abs(k[1] - k[0]), abs(k[2] - k[1])
        # c < 0 puts the gap to the right of the edge
        if c < 0:
            assert right < 1e-4 < left
        else:
            assert left < 1e-4 < right
