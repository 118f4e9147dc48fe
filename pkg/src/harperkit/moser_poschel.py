"""Perturbation of a triangular reduction: gap opening and square-root laws.

Let ``Z`` conjugate ``(A_{a,V}, omega)`` to ``B = ((1, c), (0, 1))`` with
``det Z = 1``.  Raising the energy to ``a + alpha W(theta)`` (equivalently
replacing ``V`` by ``V - alpha W``) adds ``alpha W E_11`` to ``A``, and

    Z(theta + 2 pi omega)^{-1} A_{a + alpha W, V} Z(theta) = B + alpha W P(theta),

    P = ((z11 z12 - c z11^2,  z12^2 - c z11 z12),
         (-z11^2,             -z11 z12)),

with ``z11, z12`` the first row of ``Z``.  One step of averaging replaces
``W P`` by its mean.  For ``c != 0`` the averaged matrix is hyperbolic iff
``c alpha [W z11^2] < 0``, with Lyapunov exponent ``~ sqrt|c [W z11^2] alpha|``;
on the other side the rotation number moves by the same amount over ``2 pi``.
For ``c = 0`` the averaged perturbation is the traceless matrix ``D~`` and
hyperbolicity is decided by ``det D~ < 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .cocycle import orbit_stats_grid, run_orbits
from .params import Potential, _omega
from .reducibility import Conjugation, theta_grid


class DegenerateFit(ValueError):
    pass


class DegenerateNormalization(ValueError):
    pass


def _zrow(Z, theta):
    """First row ``(z11, z12)`` of ``Z`` at ``theta``; ``Z`` may be a
    :class:`Conjugation`, a callable or a constant 2x2 matrix."""
    th = np.asarray(theta, dtype=float)
    if isinstance(Z, Conjugation):
        Zv = Z.zfunc(th)
    elif callable(Z):
        Zv = np.asarray(Z(th))
    else:
        Zv = np.broadcast_to(np.asarray(Z, dtype=float), th.shape + (2, 2))
    Zv = np.real_if_close(Zv)
    return Zv[..., 0, 0], Zv[..., 0, 1]


def _c_of(Z, c):
    if c is not None:
        return float(c)
    if isinstance(Z, Conjugation) and Z.c is not None:
        return float(Z.c)
    raise ValueError("c must be given for a conjugation without a recorded c")


def perturbation_matrix(Z, theta, c: Optional[float] = None, W: Optional[Potential] = None):
    """``P(theta)`` (times ``W(theta)`` when ``W`` is given).

    Shape ``theta.shape + (2, 2)``; ``trace P == 0`` identically.
    """
    cc = _c_of(Z, c)
    z11, z12 = _zrow(Z, theta)
    P = np.empty(np.shape(z11) + (2, 2))
    P[..., 0, 0] = z11 * z12 - cc * z11 * z11
    P[..., 0, 1] = z12 * z12 - cc * z11 * z12
    P[..., 1, 0] = -z11 * z11
    P[..., 1, 1] = -z11 * z12
    if W is not None:
        P = P * np.asarray(W(np.asarray(theta, dtype=float)))[..., None, None]
    return P


def averages(Z, W: Potential, M: int = 1024) -> tuple[float, float, float]:
    """``([W z11^2], [W z11 z12], [W z12^2])`` by the trapezoid rule on ``M`` points."""
    if M < 256:
        raise ValueError("M must be >= 256")
    th = theta_grid(M)
    z11, z12 = _zrow(Z, th)
    w = np.asarray(W(th))
    return (float(np.mean(w * z11 * z11)), float(np.mean(w * z11 * z12)),
            float(np.mean(w * z12 * z12)))


@dataclass(frozen=True)
class MPReport:
    c: float
    avg11: float
    avg1112: float
    avg12: float
    dTilde: float
    conditionCne0: bool
    conditionCe0: bool
    conditionAlpha: bool
    dichotomy: bool
    predictedGapSide: Optional[str]
    predictedGamma: float
    predictedRotCoeff: float
    alphaRange: tuple

    def averaged_matrix(self) -> np.ndarray:
        """``[W P]``; its determinant is ``dTilde`` when ``c = 0``."""
        c = self.c
        return np.array([[self.avg1112 - c * self.avg11, self.avg12 - c * self.avg1112],
                         [-self.avg11, -self.avg1112]])

    def to_json(self) -> dict:
        d = asdict(self)
        d["alphaRange"] = list(self.alphaRange)
        return d


def analyze(c: float, avgs: Sequence[float], alpha_range=(1e-6, 1e-3), c_tol: float = 1e-10,
            avg_tol: float = 1e-12) -> MPReport:
    """Leading-order predictions for ``B + alpha [W P]``.

    ``alpha_range`` is a closed interval not containing 0.  The gap side is
    the side of ``a`` (in energy, for ``W > 0``) where the dichotomy lives:
    ``Right`` when it holds for ``alpha > 0``.  For ``c = 0`` the gap, if
    any, opens on both sides and no side is reported.
    """
    avg11, avg1112, avg12 = (float(x) for x in avgs)
    lo, hi = sorted(float(x) for x in alpha_range)
    if lo <= 0 <= hi:
        raise ValueError("alpha_range must not contain 0")
    d_tilde = -avg1112 * avg1112 + avg12 * avg11
    c_zero = abs(c) <= c_tol
    cond_cne0 = (not c_zero) and abs(avg11) > avg_tol
    cond_ce0 = c_zero and d_tilde < 0
    cond_alpha = cond_cne0 and (c * lo * avg11 < 0) and (c * hi * avg11 < 0)
    side = None
    if cond_cne0:
        side = "Right" if c * avg11 < 0 else "Left"
    gamma = math.sqrt(abs(c * avg11)) if cond_cne0 else 0.0
    return MPReport(float(c), avg11, avg1112, avg12, d_tilde, cond_cne0, cond_ce0, cond_alpha,
                    bool(cond_alpha or cond_ce0), side, gamma, gamma / (2 * math.pi), (lo, hi))


def analyze_conjugation(Z: Conjugation, W: Potential, alpha_range=(1e-6, 1e-3), M: int = 1024) -> MPReport:
    return analyze(_c_of(Z, None), averages(Z, W, M), alpha_range)


@dataclass(frozen=True)
class SqrtFit:
    exponent: float
    coefficient: float
    r2: float

    def __iter__(self):
        return iter((self.exponent, self.coefficient, self.r2))


def sqrt_fit(samples, floor: float = 1e-300) -> SqrtFit:
    """Log-log least squares ``value ~ coefficient * alpha^exponent``.

    Needs at least 5 samples spanning at least two decades of ``|alpha|``.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 5:
        raise ValueError("need at least 5 (alpha, value) samples")
    al, val = np.abs(arr[:, 0]), np.abs(arr[:, 1])
    if np.any(al <= 0) or np.log10(al.max() / al.min()) < 2 - 1e-9:
        raise ValueError("samples must span at least two decades of alpha")
    if np.any(val <= floor) or not np.all(np.isfinite(val)):
        raise DegenerateFit("values underflow or are not finite")
    x, y = np.log(al), np.log(val)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SqrtFit(float(coef[0]), float(math.exp(coef[1])), r2)


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sweep:
    alpha: np.ndarray
    gamma: np.ndarray
    rot: np.ndarray
    drot: np.ndarray


def energy_sweep(V: Potential, omega, a: float, offsets, steps: int = 1_000_000, burn: int = 100_000,
                 theta0: float = 0.0) -> Sweep:
    """Lyapunov exponent and rotation shift at energies ``a + offset``.

    This is the constant-``W`` perturbation ``W = 1``.  ``drot`` is measured
    against ``rot(a)`` along the same orbit.
    """
    off = np.asarray(offsets, dtype=float)
    e = np.concatenate([[a], a + off])
    raw = run_orbits(V, omega, e, [theta0], steps, burn)
    gamma = raw[1][:, 0] / steps
    rot = raw[2][:, 0] / (2 * math.pi * steps)
    return Sweep(off, np.maximum(gamma[1:], 0.0), rot[1:], np.abs(rot[1:] - rot[0]))


def potential_sweep(V: Potential, W: Potential, omega, a: float, alphas, steps: int = 1_000_000,
                    burn: int = 100_000, theta0: float = 0.0) -> Sweep:
    """Same as :func:`energy_sweep` for a general ``W``: the cocycle of
    ``V - alpha W`` at energy ``a``."""
    al = np.asarray(alphas, dtype=float)
    base = run_orbits(V, omega, [a], [theta0], steps, burn)
    r0 = base[2][0, 0] / (2 * math.pi * steps)
    g, r = [], []
    for x in al:
        raw = run_orbits(V + W.scaled(-x), omega, [a], [theta0], steps, burn)
        g.append(raw[1][0, 0] / steps)
        r.append(raw[2][0, 0] / (2 * math.pi * steps))
    r = np.array(r)
    return Sweep(al, np.maximum(np.array(g), 0.0), r, np.abs(r - r0))


@dataclass(frozen=True)
class CollapsedGapResult:
    kind: str  # DifferentiableRot | SqrtEdge | Undetermined
    exponent: float
    value: float  # slope (DifferentiableRot) or sqrt coefficient (SqrtEdge)
    r2: float


def collapsed_gap_test(a0: float, V: Potential, omega, h_sequence, steps: int = 1_000_000,
                       burn: int = 10_000, zero_tol: float = 1e-7, exp_tol: float = 0.1,
                       r2_min: float = 0.98) -> CollapsedGapResult:
    """Growth law of ``|rot(a0 + h) - rot(a0)|`` as ``h -> 0``.

    The larger of the two one-sided differences is fitted.  Exponent near 1:
    ``DifferentiableRot`` with the fitted slope; near 1/2: ``SqrtEdge``
    with the fitted coefficient; differences all below ``zero_tol``: rot is
    constant (``DifferentiableRot`` with slope 0).
    """
    h = np.asarray(h_sequence, dtype=float)
    if h.ndim != 1 or len(h) < 3 or np.any(h <= 0):
        raise ValueError("h_sequence must hold at least 3 positive steps")
    e = np.concatenate([[a0], a0 + h, a0 - h])
    raw = run_orbits(V, omega, e, [0.0], steps, burn)
    rot = raw[2][:, 0] / (2 * math.pi * steps)
    n = len(h)
    d = np.maximum(np.abs(rot[1 : 1 + n] - rot[0]), np.abs(rot[1 + n :] - rot[0]))
    if np.all(d < zero_tol):
        return CollapsedGapResult("DifferentiableRot", float("nan"), 0.0, 1.0)
    if np.any(d <= 0):
        return CollapsedGapResult("Undetermined", float("nan"), float("nan"), 0.0)
    x, y = np.log(h), np.log(d)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    ex = float(coef[0])
    if r2 < r2_min:
        return CollapsedGapResult("Undetermined", ex, float("nan"), r2)
    if abs(ex - 1.0) <= exp_tol:
        return CollapsedGapResult("DifferentiableRot", ex, float(np.median(d / h)), r2)
    if abs(ex - 0.5) <= exp_tol:
        return CollapsedGapResult("SqrtEdge", ex, float(np.median(d / np.sqrt(h))), r2)
    return CollapsedGapResult("Undetermined", ex, float("nan"), r2)


# ---------------------------------------------------------------------------
# generic gap opening for collapsed gaps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapOpeningShift:
    alphaShift: float
    det2: float
    det3: float
    generic: bool
    means: dict


def gap_opening_shift(Z, W: Potential, M: int = 1024, tol: float = 1e-10,
                      norm_tol: float = 1e-12) -> GapOpeningShift:
    """Shift ``alpha`` making ``[(alpha + W) y1] = 0`` and the degeneracy test.

    ``y1 = (z11^2 + z12^2)/2``, ``y2 = (z11^2 - z12^2)/2``, ``y3 = z11 z12``.
    ``det2 = -[W y1][y2] + [W y2][y1]``, ``det3 = -[W y1][y3] + [W y3][y1]``;
    the shifted perturbation opens the gap when either is nonzero.
    """
    if M < 256:
        raise ValueError("M must be >= 256")
    th = theta_grid(M)
    z11, z12 = _zrow(Z, th)
    w = np.asarray(W(th))
    y1 = 0.5 * (z11 * z11 + z12 * z12)
    y2 = 0.5 * (z11 * z11 - z12 * z12)
    y3 = z11 * z12
    m = {"y1": float(np.mean(y1)), "y2": float(np.mean(y2)), "y3": float(np.mean(y3)),
         "Wy1": float(np.mean(w * y1)), "Wy2": float(np.mean(w * y2)), "Wy3": float(np.mean(w * y3))}
    if abs(m["y1"]) <= norm_tol:
        raise DegenerateNormalization("[y1] vanishes; renormalize Z")
    shift = -m["Wy1"] / m["y1"]
    d2 = -m["Wy1"] * m["y2"] + m["Wy2"] * m["y1"]
    d3 = -m["Wy1"] * m["y3"] + m["Wy3"] * m["y1"]
    return GapOpeningShift(float(shift), float(d2), float(d3), bool(abs(d2) > tol or abs(d3) > tol), m)
