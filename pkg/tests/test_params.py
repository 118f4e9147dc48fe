import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from harperkit.params import (
    DiophantineWitness, Frequency, Potential, Resonant, Undetermined, cf_value,
    classify_rotation, continued_fraction, diophantine_margin, eval_potential, fold_mod1,
    make_potential, norm_rho, resonant_phase_violations,
)

amplitudes = st.floats(-2, 2, allow_nan=False)


@st.composite
def potentials(draw, max_band=4):
    band = draw(st.integers(0, max_band))
    pairs = [(0, complex(draw(amplitudes), 0))]
    for k in range(1, band + 1):
        z = complex(draw(amplitudes), draw(amplitudes))
        pairs += [(k, z), (-k, z.conjugate())]
    return make_potential(pairs, rho=draw(st.floats(0, 2)))


# makePotential ---------------------------------------------------------------

def test_amo_from_fourier_pair():
    V = make_potential([(1, 1.0), (-1, 1.0)])
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(eval_potential(V, th), 2 * np.cos(th))
    assert V == Potential.cosine(2.0)


def test_empty_series_is_zero():
    V = make_potential([])
    assert V.band == 0
    assert eval_potential(V, 1.234) == 0.0


def test_imaginary_pair_gives_sine():
    V = make_potential([(2, 0.1j), (-2, -0.1j)])
    th = np.linspace(0, 2 * np.pi, 33)
    assert np.allclose(eval_potential(V, th), -0.2 * np.sin(2 * th))


@pytest.mark.parametrize("pairs", [
    [(1, 1.0)],
    [(1, 1.0), (-1, 0.5)],
    [(0, 1j)],
    [(2, 0.1j), (-2, 0.1j)],
])
def test_rejects_non_conjugate_symmetric(pairs):
    with pytest.raises(ValueError):
        make_potential(pairs)


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        make_potential([(1, float("nan")), (-1, float("nan"))])


def test_json_roundtrip():
    V = Potential.trig(cos={1: 0.3}, sin={2: 0.1}, const=0.05, rho=0.7)
    assert Potential.from_json(V.to_json()) == V


# evalPotential ---------------------------------------------------------------

def test_eval_examples():
    assert eval_potential(Potential.cosine(1.0), 0.0) == pytest.approx(1.0)
    assert eval_potential(Potential.zero(), 2.2) == 0.0
    V = make_potential([(2, 0.1j), (-2, -0.1j)])
    assert eval_potential(V, math.pi / 4) == pytest.approx(-0.2)


@given(potentials(), st.floats(-10, 10))
def test_eval_is_real(V, theta):
    z = sum(v * np.exp(1j * k * theta) for k, v in V.coeffs.items())
    assert abs(complex(z).imag) <= 1e-12
    assert eval_potential(V, theta) == pytest.approx(complex(z).real, abs=1e-12)


# normRho ---------------------------------------------------------------------

def test_norm_examples():
    V = Potential.cosine(1.0)
    assert norm_rho(V, 0.0) == pytest.approx(1.0)
    assert norm_rho(V, math.log(2)) == pytest.approx(2.0)
    assert norm_rho(Potential.zero(), 3.0) == 0.0


@given(potentials(), st.floats(0, 2), st.floats(0, 2))
def test_norm_monotone_and_bounds_sup(V, r1, r2):
    lo, hi = sorted((r1, r2))
    assert norm_rho(V, lo) <= norm_rho(V, hi) + 1e-12
    th = 2 * np.pi * np.arange(1024) / 1024
    assert norm_rho(V, 0.0) >= np.max(np.abs(eval_potential(V, th))) - 1e-12


# frequencies -----------------------------------------------------------------

def test_golden_and_silver():
    g = Frequency.golden()
    assert g.value == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-16)
    assert abs(float(cf_value(g.cf)) - g.value) < 1e-12
    s = Frequency.silver()
    assert s.value == pytest.approx(math.sqrt(2) - 1, abs=1e-16)
    assert abs(float(cf_value(s.cf)) - s.value) < 1e-12


def test_continued_fraction_exact():
    assert continued_fraction(Fraction(43, 19)) == (2, 3, 1, 4)
    assert cf_value((2, 3, 1, 4)) == Fraction(43, 19)


@pytest.mark.parametrize("bad", [0.5, 0.25, 1.0, 0.0, -0.3, 3 / 7])
def test_rational_frequencies_rejected(bad):
    with pytest.raises(ValueError):
        Frequency(bad)


@given(st.floats(0.01, 0.99))
def test_cf_reproduces_value(x):
    try:
        f = Frequency(x, kcheck=50)
    except ValueError:
        return
    assert abs(float(cf_value(f.cf)) - f.value) < 1e-12


def test_frequency_spec():
    assert Frequency.from_spec("golden").value == Frequency.golden().value
    assert Frequency.from_spec({"omega": "silver"}).name == "silver"
    with pytest.raises(ValueError):
        Frequency.from_spec("bronze")


# diophantineMargin -------------------------------------------------------------

def test_margin_golden_positive_matches_mpmath():
    mp.mp.dps = 40
    g = Frequency.golden()
    w = (mp.sqrt(5) - 1) / 2
    ref = min(abs(mp.sin(2 * mp.pi * k * w)) * k ** 2 for k in range(1, 10001))
    m = diophantine_margin(g, 2.0, 10_000)
    assert m > 0
    assert m == pytest.approx(float(ref), rel=1e-9)


def test_margin_resonant_and_single_term():
    # a bare rational float bypasses the Frequency constructor check on purpose
    assert diophantine_margin(0.5, 2.0, 4) == 0.0
    g = Frequency.golden()
    assert diophantine_margin(g, 2.0, 1) == pytest.approx(abs(math.sin(2 * math.pi * g.value)))


@given(st.integers(1, 300), st.integers(1, 300), st.floats(1.01, 3.0), st.floats(1.01, 3.0))
def test_margin_monotonicity(k1, k2, t1, t2):
    g = Frequency.golden()
    ka, kb = sorted((k1, k2))
    assert diophantine_margin(g, 2.0, kb) <= diophantine_margin(g, 2.0, ka) + 1e-15
    ta, tb = sorted((t1, t2))
    assert diophantine_margin(g, ta, 50) <= diophantine_margin(g, tb, 50) + 1e-15


# resonantPhaseViolations -------------------------------------------------------

def test_violations_resonant_phase():
    g = Frequency.golden()
    assert 1 in resonant_phase_violations(-math.pi * g.value, g, 2.0, 100)


def test_violations_phi_one_golden():
    # Frozen from a 40-digit brute-force scan; the window is not empty.
    expected = [1, -2, 6, -7, 14, 27, -28, -41, 48, 61, -62, 82, -96, 116, -117, -151, 171,
                -206, 226, -295, 315, -439, 548, -672, 925, -1049, 1535, -1659, 2522, -4243,
                -8424]
    g = Frequency.golden()
    assert resonant_phase_violations(1.0, g, 2.0, 10_000) == expected
    mp.mp.dps = 40
    w = (mp.sqrt(5) - 1) / 2
    brute = [s * k for s in (-1, 1) for k in range(1, 3001)
             if abs(mp.sin(1 + mp.pi * s * k * w)) < mp.e ** (-mp.mpf(k) ** 0.25)]
    assert sorted(brute, key=lambda k: (abs(k), k)) == [k for k in expected if abs(k) <= 3000]


def test_violations_quarter():
    v = resonant_phase_violations(0.0, 0.25, 2.0, 16)
    for k in range(4, 17, 4):
        assert k in v and -k in v


# classifyRotation --------------------------------------------------------------

def test_classify_examples():
    g = Frequency.golden()
    assert classify_rotation(g.value / 2, g) == Resonant(1, 0)
    assert classify_rotation(0.5, g) == Resonant(0, 1)
    w = classify_rotation(g.value * 0.37 + 0.11, g, kmax=1000, sigma=2.0)
    assert isinstance(w, DiophantineWitness) and w.K > 0


def test_classify_undetermined_near_resonance():
    g = Frequency.golden()
    # off resonance by 2e-9 in 2*alpha, which a strongly negative weight cannot separate
    r = classify_rotation(g.value * 7 / 2 + 1e-9, g, tol=1e-10, kmax=10, sigma=-3.0)
    assert isinstance(r, Undetermined)


@given(st.floats(-3, 3), st.integers(-3, 3))
def test_classify_mod_one(alpha, n):
    g = Frequency.golden()
    a = classify_rotation(alpha, g, kmax=60)
    b = classify_rotation(alpha + n, g, kmax=60)
    assert type(a) is type(b)
    if isinstance(a, Resonant):
        assert a.k == b.k
    else:
        assert a.kmin == b.kmin


@given(st.floats(-5, 5))
def test_fold_range(x):
    y = fold_mod1(x)
    assert 0 <= y <= 0.5
    assert fold_mod1(-x) == pytest.approx(y, abs=1e-12)
