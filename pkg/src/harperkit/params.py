"""Potentials, frequencies and small-divisor arithmetic.

A potential is a real trigonometric polynomial stored through its Fourier
coefficients ``V_k`` (``V(theta) = sum_k V_k exp(i k theta)``).  A frequency is
an irrational number in (0, 1) together with its continued-fraction data.
Diophantine constants are never assumed; they are *measured* on finite
windows of integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

# |sin(2 pi k omega)| below this is treated as an exact zero (double precision).
SIN_ZERO = 1e-13
REALITY_TOL = 1e-12


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Real analytic potential as a finite Fourier series.

    Attributes
    ----------
    coeffs : mapping k -> complex
        Fourier amplitudes, conjugate symmetric (``V_{-k} = conj(V_k)``).
        Zero amplitudes are dropped.
    rho : float
        Half-width of the analyticity strip used by :meth:`norm`.
    """

    coeffs: Mapping[int, complex] = field(default_factory=dict)
    rho: float = 1.0

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.coeffs).items():
            v = complex(v)
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"non-finite Fourier amplitude at k={k}")
            if v != 0:
                clean[int(k)] = v
        for k, v in clean.items():
            partner = clean.get(-k, 0j)
            if abs(partner - v.conjugate()) > REALITY_TOL * max(1.0, abs(v)):
                raise ValueError(
                    f"Fourier amplitudes are not conjugate symmetric at k={k}: "
                    f"V_k={v}, V_-k={partner}"
                )
        # symmetrize exactly so evaluation is real to rounding
        sym = {}
        for k, v in clean.items():
            if k == 0:
                sym[0] = complex(v.real, 0.0)
            elif k > 0:
                sym[k] = v
                sym[-k] = v.conjugate()
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")
        object.__setattr__(self, "coeffs", dict(sorted(sym.items())))

    # constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, rho: float = 1.0) -> "Potential":
        return cls({}, rho)

    @classmethod
    def cosine(cls, b: float, harmonic: int = 1, rho: float = 1.0) -> "Potential":
        """``b cos(harmonic * theta)``; ``cosine(b)`` is the almost Mathieu potential."""
        if harmonic == 0:
            return cls({0: b}, rho)
        return cls({harmonic: b / 2, -harmonic: b / 2}, rho)

    @classmethod
    def trig(
        cls,
        cos: Mapping[int, float] | None = None,
        sin: Mapping[int, float] | None = None,
        const: float = 0.0,
        rho: float = 1.0,
    ) -> "Potential":
        """``const + sum_k cos[k] cos(k t) + sin[k] sin(k t)`` for k >= 1."""
        c: dict[int, complex] = {}
        if const:
            c[0] = const
        for k, a in (cos or {}).items():
            if k <= 0:
                raise ValueError("harmonics must be positive")
            c[k] = c.get(k, 0) + a / 2
            c[-k] = c.get(-k, 0) + a / 2
        for k, b in (sin or {}).items():
            if k <= 0:
                raise ValueError("harmonics must be positive")
            c[k] = c.get(k, 0) - 0.5j * b
            c[-k] = c.get(-k, 0) + 0.5j * b
        return cls(c, rho)

    # accessors ------------------------------------------------------------

    @property
    def band(self) -> int:
        """Largest harmonic with a nonzero amplitude (0 for constants)."""
        return max((abs(k) for k in self.coeffs), default=0)

    @property
    def is_real_even(self) -> bool:
        return all(abs(v.imag) == 0 for v in self.coeffs.values())

    def coeff(self, k: int) -> complex:
        return self.coeffs.get(k, 0j)

    def __call__(self, theta):
        return eval_potential(self, theta)

    def norm(self, rho: float | None = None) -> float:
        return norm_rho(self, self.rho if rho is None else rho)

    def __add__(self, other: "Potential") -> "Potential":
        c = dict(self.coeffs)
        for k, v in other.coeffs.items():
            c[k] = c.get(k, 0) + v
        return Potential(c, min(self.rho, other.rho))

    def scaled(self, s: float) -> "Potential":
        return Potential({k: s * v for k, v in self.coeffs.items()}, self.rho)

    def shifted(self, s: float) -> "Potential":
        """Potential plus the constant ``s``."""
        return self + Potential({0: s}, self.rho)

    def to_json(self) -> dict:
        return {
            "fourier": [[k, v.real, v.imag] for k, v in self.coeffs.items()],
            "rho": self.rho,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Potential":
        rows = obj.get("fourier", [])
        pairs = []
        for row in rows:
            if len(row) == 2:
                k, re = row
                im = 0.0
            elif len(row) == 3:
                k, re, im = row
            else:
                raise ValueError(f"fourier rows are [k, re, im], got {row!r}")
            if int(k) != k:
                raise ValueError(f"Fourier index must be an integer, got {k!r}")
            pairs.append((int(k), complex(float(re), float(im))))
        return make_potential(pairs, rho=float(obj.get("rho", 1.0)))


def make_potential(coeffs: Iterable[tuple[int, complex]], rho: float = 1.0) -> Potential:
    """Build a :class:`Potential` from ``(k, amplitude)`` pairs.

    Every ``k != 0`` must come with its conjugate partner ``-k``; a repeated
    index is an error.
    """
    c: dict[int, complex] = {}
    for k, v in coeffs:
        k = int(k)
        if k in c:
            raise ValueError(f"duplicate Fourier index {k}")
        c[k] = complex(v)
    for k, v in c.items():
        if k == 0:
            if abs(v.imag) > REALITY_TOL * max(1.0, abs(v)):
                raise ValueError("V_0 must be real")
        elif v != 0 and -k not in c:
            raise ValueError(f"missing conjugate partner for k={k}")
    return Potential(c, rho)


def eval_potential(V: Potential, theta):
    """Evaluate ``V`` at ``theta`` (scalar or array) by the finite Fourier sum."""
    th = np.asarray(theta, dtype=float)
    out = np.zeros(th.shape, dtype=complex)
    for k, v in V.coeffs.items():
        out = out + v * np.exp(1j * k * th)
    if out.size and np.max(np.abs(out.imag)) > 1e-12 * max(1.0, np.max(np.abs(out.real))):
        raise ValueError("potential evaluates to a non-real value")
    res = out.real
    return float(res) if res.ndim == 0 else res


def norm_rho(V: Potential, rho: float) -> float:
    """Certified upper bound ``sum |V_k| exp(|k| rho)`` for the strip sup-norm."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return float(sum(abs(v) * math.exp(abs(k) * rho) for k, v in V.coeffs.items()))


# --------------------------------------------------------------------------
# Frequencies
# --------------------------------------------------------------------------


def continued_fraction(x: Union[float, Fraction], max_terms: int = 64, tol: float = 1e-15) -> tuple[int, ...]:
    """Partial quotients of ``x`` (exact expansion of the double), stopping
    once the convergent is within ``tol``."""
    r = Fraction(x)
    terms = []
    target = Fraction(x)
    while len(terms) < max_terms:
        a = math.floor(r)
        terms.append(int(a))
        if abs(float(cf_value(terms) - target)) <= tol:
            break
        frac = r - a
        if frac == 0:
            break
        r = 1 / frac
    return tuple(terms)


def cf_value(terms: Sequence[int]) -> Fraction:
    """Exact value of the finite continued fraction ``[a0; a1, a2, ...]``."""
    if not terms:
        raise ValueError("empty continued fraction")
    val = Fraction(terms[-1])
    for a in reversed(terms[:-1]):
        val = a + 1 / val
    return val


def convergents(terms: Sequence[int]) -> list[tuple[int, int]]:
    """Convergents ``p_n/q_n`` as integer pairs."""
    p0, q0, p1, q1 = 1, 0, terms[0], 1
    out = [(p1, q1)]
    for a in terms[1:]:
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append((p1, q1))
    return out


@dataclass(frozen=True)
class Frequency:
    """Rotation frequency ``omega`` with continued-fraction data.

    ``kcheck`` sets the window on which nonresonance is verified at
    construction; ``kcheck=0`` skips the check (used for deliberately
    resonant test values such as 1/2).
    """

    value: float
    cf: tuple[int, ...] = ()
    kcheck: int = 1000
    name: str = ""

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0):
            raise ValueError(f"frequency must lie in (0, 1), got {v}")
        object.__setattr__(self, "value", v)
        if not self.cf:
            object.__setattr__(self, "cf", continued_fraction(v))
        if abs(float(cf_value(self.cf)) - v) > 1e-12:
            raise ValueError("continued fraction does not reproduce the frequency")
        if self.kcheck > 0:
            k = np.arange(1, self.kcheck + 1)
            m = np.min(np.abs(np.sin(2 * np.pi * k * v)))
            if m <= SIN_ZERO:
                kbad = int(k[np.argmin(np.abs(np.sin(2 * np.pi * k * v)))])
                raise ValueError(f"frequency {v} is resonant at k={kbad}")

    @classmethod
    def golden(cls) -> "Frequency":
        v = (math.sqrt(5.0) - 1.0) / 2.0
        return cls(v, (0,) + (1,) * 40, name="golden")

    @classmethod
    def silver(cls) -> "Frequency":
        v = math.sqrt(2.0) - 1.0
        return cls(v, (0,) + (2,) * 32, name="silver")

    @classmethod
    def from_spec(cls, spec, kcheck: int = 1000) -> "Frequency":
        """Accept ``"golden"``, ``"silver"``, a float, or ``{"omega": ...}``."""
        if isinstance(spec, Mapping):
            spec = spec.get("omega")
        if isinstance(spec, str):
            key = spec.strip().lower()
            if key == "golden":
                return cls.golden()
            if key == "silver":
                return cls.silver()
            raise ValueError(f"unknown frequency name {spec!r}")
        if isinstance(spec, bool) or not isinstance(spec, (int, float)):
            raise ValueError(f"frequency must be a name or a number, got {spec!r}")
        return cls(float(spec), kcheck=kcheck)

    def to_json(self) -> dict:
        return {"omega": self.name or self.value}

    def __float__(self) -> float:
        return self.value

    def convergents(self) -> list[tuple[int, int]]:
        return convergents(self.cf)


def _omega(w) -> float:
    return w.value if isinstance(w, Frequency) else float(w)


def diophantine_margin(omega: Frequency, tau: float, kmax: int) -> float:
    """``min_{1<=k<=kmax} |sin(2 pi k omega)| k^tau``.

    An empirical estimate of the constant ``c`` in ``|sin 2 pi k w| > c/|k|^tau``
    on the window.  Zero signals a resonance inside the window.  Only
    positive ``k`` are scanned; the quantity is even in ``k``.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    w = _omega(omega)
    k = np.arange(1, kmax + 1, dtype=float)
    s = np.abs(np.sin(2 * np.pi * k * w))
    s[s <= SIN_ZERO] = 0.0
    return float(np.min(s * k**tau))


def diophantine_margins(omega: Frequency, taus: Sequence[float], kmaxes: Sequence[int]) -> np.ndarray:
    """Table of :func:`diophantine_margin` values, rows ``tau``, columns ``kmax``."""
    return np.array([[diophantine_margin(omega, t, K) for K in kmaxes] for t in taus])


def resonant_phase_violations(phi: float, omega: Frequency, tau: float, kmax: int) -> list[int]:
    """All ``k`` with ``1 <= |k| <= kmax`` and ``|sin(phi + pi k w)| < exp(-|k|^(1/(2 tau)))``.

    Returned in order of increasing ``|k|`` (negative first on ties).  An
    empty list, or a list confined to small ``|k|``, is numerical evidence
    that ``phi`` is outside the measure-zero exceptional set.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    w = _omega(omega)
    ks = np.arange(1, kmax + 1)
    bound = np.exp(-(ks.astype(float) ** (1.0 / (2.0 * tau))))
    out = []
    for sign in (-1, 1):
        s = np.abs(np.sin(phi + np.pi * sign * ks * w))
        hit = ks[s < bound]
        out.extend(int(sign * k) for k in hit)
    return sorted(out, key=lambda k: (abs(k), k))


@dataclass(frozen=True)
class Resonant:
    k: int
    j: int


@dataclass(frozen=True)
class DiophantineWitness:
    K: float
    sigma: float
    kmin: int  # integer attaining the minimum


@dataclass(frozen=True)
class Undetermined:
    margin: float
    kmin: int


def _dist_int(x):
    return np.abs(x - np.round(x))


def classify_rotation(alpha: float, omega: Frequency, tol: float = 1e-10, kmax: int = 1000,
                      sigma: float = 2.0):
    """Classify a rotation number as resonant or Diophantine w.r.t. ``omega``.

    Returns :class:`Resonant` ``(k, j)`` with ``2 alpha = k w + j`` within
    ``tol`` (minimal ``|k|``), otherwise a :class:`DiophantineWitness` with the
    measured ``K = min |sin(pi(2 alpha - k w))| |k|^sigma`` over
    ``1 <= |k| <= kmax``, or :class:`Undetermined` if that margin is not
    above ``tol``.  Everything is taken modulo 1 in ``alpha``.
    """
    w = _omega(omega)
    two_a = 2.0 * (alpha % 1.0)
    for k in range(0, kmax + 1):
        for kk in ((k,) if k == 0 else (k, -k)):
            x = two_a - kk * w
            if _dist_int(x) <= tol:
                return Resonant(kk, int(round(x)))
    ks = np.concatenate([np.arange(1, kmax + 1), -np.arange(1, kmax + 1)])
    vals = np.abs(np.sin(np.pi * (two_a - ks * w))) * np.abs(ks).astype(float) ** sigma
    i = int(np.argmin(vals))
    K = float(vals[i])
    if K <= tol:
        return Undetermined(K, int(ks[i]))
    return DiophantineWitness(K, sigma, int(ks[i]))


def fold_mod1(x):
    """Representative of ``x`` modulo 1 folded into ``[0, 1/2]`` (``x ~ -x``)."""
    y = np.mod(x, 1.0)
    return np.minimum(y, 1.0 - y)


def dist_mod1(x, y):
    """Distance between ``x`` and ``y`` on the circle R/Z."""
    return _dist_int(np.asarray(x) - np.asarray(y))
