"""Conjugations of Schrödinger cocycles built from Bloch waves.

With ``u_n = (x_n, x_{n-1})`` the cocycle acts as ``u_{n+1} = A(theta_n) u_n``.
A Bloch wave ``x_n = e^{i phi n} f(theta_n)`` therefore gives

    v(theta) = (f(theta), e^{-i phi} f(theta - 2 pi omega)),
    A(theta) v(theta) = e^{i phi} v(theta + 2 pi omega),

and ``Y = (v | conj v)`` conjugates ``A`` to ``diag(e^{i phi}, e^{-i phi})``.
Every shift ``theta -> theta + 2 pi omega`` is evaluated through Fourier sums.

Two reductions are produced:

* :func:`realify` turns ``Y`` into a real ``Z`` with ``det Z = 1`` and a
  rotation Floquet matrix (nonresonant ``phi``),
* :func:`resonant_reduce` triangularizes from a real solution and solves the
  cohomological equation, giving ``B = ((1, c), (0, 1))`` (gap edges).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cocycle import Cocycle, transfer_matrix
from .duality import BlochWave
from .params import Potential, _omega

ZSQ = np.array([[1.0, -1.0j], [1.0, 1.0j]])


class ReductionError(RuntimeError):
    """Base class; ``payload`` carries the diagnostic data."""

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class DegenerateY(ReductionError):
    pass


class SmallDivisorOverflow(ReductionError):
    pass


class VanishingV(ReductionError):
    pass


class ParityError(VanishingV):
    """Solution needs the doubled circle (antiperiodic or half-frequency case)."""


@dataclass
class Conjugation:
    """``A(theta) Z(theta) = Z(theta + 2 pi omega) B`` sampled on ``thetaGrid``.

    ``zfunc`` evaluates ``Z`` at arbitrary angles (array in, ``(..., 2, 2)``
    out) from the stored Fourier data.
    """

    thetaGrid: np.ndarray
    Z: np.ndarray
    B: np.ndarray
    residual: float
    detStats: tuple
    kind: str  # Raw | Rotation | Triangular
    zfunc: Callable = field(repr=False, default=None)
    a: float = float("nan")
    V: Optional[Potential] = None
    omega: float = float("nan")
    phi: float = float("nan")
    c: Optional[float] = None
    info: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def cplx(x):
            x = np.asarray(x)
            if np.iscomplexobj(x):
                return [[float(v.real), float(v.imag)] for v in x.ravel()]
            return [float(v) for v in x.ravel()]

        out = {
            "kind": self.kind,
            "a": float(self.a),
            "phi": float(self.phi),
            "grid": [float(t) for t in self.thetaGrid],
            "Z": cplx(self.Z),
            "B": cplx(self.B),
            "residual": float(self.residual),
            "detStats": {"mean": cplx(self.detStats[0]), "variation": float(self.detStats[1])},
        }
        if self.c is not None:
            out["c"] = float(self.c)
        out.update({k: v for k, v in self.info.items() if isinstance(v, (int, float, str))})
        return out


def theta_grid(M: int) -> np.ndarray:
    if M < 4:
        raise ValueError("M must be >= 4")
    return 2 * np.pi * np.arange(M) / M


def _fourier_eval(coeffs: np.ndarray, theta) -> np.ndarray:
    """``sum_n coeffs[n + K] e^{i n theta}`` for coefficients on ``[-K, K]``.

    Uniform grids ``s + 2 pi j / M`` are summed exactly with an inverse FFT
    of the aliased coefficients; other inputs use direct sums.
    """
    K = (len(coeffs) - 1) // 2
    th = np.asarray(theta, dtype=float)
    modes = np.arange(-K, K + 1)
    M = th.size
    if th.ndim == 1 and M >= 16 and 2 * K + 1 > 8:
        step = 2 * np.pi / M
        if np.allclose(np.diff(th), step, rtol=0, atol=1e-12):
            b = np.zeros(M, dtype=complex)
            np.add.at(b, modes % M, coeffs * np.exp(1j * modes * th[0]))
            return M * np.fft.ifft(b)
    return np.exp(1j * np.multiply.outer(th, modes)) @ coeffs


def conjugation_residual(zfunc, B, V: Potential, a: float, omega, thetas) -> tuple[float, float]:
    """``max`` and ``mean`` over ``thetas`` of ``||A Z - Z(.+2 pi omega) B|| / max ||A||``."""
    w = _omega(omega)
    A = transfer_matrix(Cocycle(a, V, w), thetas)
    Z = zfunc(thetas)
    Zp = zfunc(np.asarray(thetas) + 2 * np.pi * w)
    R = A @ Z - Zp @ B
    r = np.linalg.norm(R, ord=2, axis=(-2, -1))
    scale = np.max(np.linalg.norm(A, ord=2, axis=(-2, -1)))
    return float(np.max(r) / scale), float(np.mean(r) / scale)


def _det_stats(Z) -> tuple:
    d = np.linalg.det(Z)
    mean = complex(np.mean(d))
    var = float(np.max(np.abs(d - mean)) / abs(mean)) if mean != 0 else math.inf
    return (mean if np.iscomplexobj(Z) else mean.real), var


# ---------------------------------------------------------------------------
# nonresonant case
# ---------------------------------------------------------------------------


def _v_func(coeffs, phi, w):
    def v(theta):
        th = np.asarray(theta, dtype=float)
        return np.stack([_fourier_eval(coeffs, th),
                         np.exp(-1j * phi) * _fourier_eval(coeffs, th - 2 * np.pi * w)], axis=-1)
    return v


def build_y(w: BlochWave, V: Potential, omega, M: int = 256, dep_tol: float = 1e-8) -> Conjugation:
    """``Y = (v | conj v)`` on an ``M``-point grid, ``B = diag(e^{i phi}, e^{-i phi})``.

    Raises :class:`DegenerateY` when ``|det Y| < dep_tol * max |v|^2``.
    """
    om = _omega(omega)
    vf = _v_func(np.asarray(w.coeffs, dtype=complex), w.phi, om)

    def zfunc(theta):
        v = vf(theta)
        return np.stack([v, np.conj(v)], axis=-1)

    grid = theta_grid(M)
    Y = zfunc(grid)
    mean, var = _det_stats(Y)
    vmax = float(np.max(np.sum(np.abs(Y[..., 0]) ** 2, axis=-1)))
    if abs(mean) < dep_tol * vmax:
        raise DegenerateY("columns of Y are linearly dependent", det=abs(mean), phi=w.phi)
    B = np.diag([np.exp(1j * w.phi), np.exp(-1j * w.phi)])
    res, _ = conjugation_residual(zfunc, B, V, w.a, om, grid)
    return Conjugation(grid, Y, B, res, (mean, var), "Raw", zfunc, w.a, V, om, w.phi)


@dataclass(frozen=True)
class Dependence:
    dependent: bool
    k: Optional[int] = None
    j: Optional[int] = None
    distance: float = math.inf


def dependence_test(phi, omega, tol: float = 1e-8, kmax: int = 100) -> Dependence:
    """Is ``phi = pi j + pi k omega`` for some ``|k| <= kmax``?

    ``phi`` may be a :class:`BlochWave`.  The smallest ``|k|`` wins.
    """
    if isinstance(phi, BlochWave):
        phi = phi.phi
    w = _omega(omega)
    best = math.inf
    for k in sorted(range(-kmax, kmax + 1), key=lambda x: (abs(x), -x)):
        t = (phi - math.pi * k * w) / math.pi
        j = round(t)
        d = abs(t - j) * math.pi
        best = min(best, d)
        if d <= tol:
            return Dependence(True, k, int(j), d)
    return Dependence(False, distance=best)


def realify(c: Conjugation) -> Conjugation:
    """Real conjugation with ``det Z = 1`` to a rotation Floquet matrix.

    ``Y`` is rescaled so that ``det Y = -i/2`` (conjugating the wave first
    when ``Im det Y > 0``, which flips ``phi``), then ``Z = Y ((1, -i), (1, i))``
    and ``B = ((cos phi, sin phi), (-sin phi, cos phi))``.
    """
    if c.kind != "Raw":
        raise ValueError("realify expects a raw conjugation")
    d = c.detStats[0]
    scale = float(np.max(np.abs(c.Z)) ** 2)
    if abs(d) < 1e-8 * scale:
        raise DegenerateY("det Y too small to realify", det=abs(d))
    phi = c.phi
    base = c.zfunc
    flip = d.imag > 0
    if flip:
        phi = (-phi) % (2 * np.pi)
    t = 1.0 / math.sqrt(2 * abs(d))

    def zfunc(theta):
        Y = base(theta)
        if flip:
            Y = Y[..., ::-1]
        return ((t * Y) @ ZSQ).real

    B = np.array([[math.cos(phi), math.sin(phi)], [-math.sin(phi), math.cos(phi)]])
    grid = c.thetaGrid
    Zc = t * (c.Z[..., ::-1] if flip else c.Z) @ ZSQ
    imag = float(np.max(np.abs(Zc.imag)))
    Z = Zc.real
    res, _ = conjugation_residual(zfunc, B, c.V, c.a, c.omega, grid)
    mean, var = _det_stats(Z)
    info = {"imag_part": imag, "flipped": int(flip)}
    return Conjugation(grid, Z, B, res, (mean, var), "Rotation", zfunc, c.a, c.V, c.omega, phi,
                       info=info)


def winding_degree(zfunc, column: int = 0, M: int = 4096) -> int:
    """Degree of ``theta -> Z(theta)[:, column]`` around the origin."""
    th = 2 * np.pi * np.arange(M) / M
    col = np.asarray(zfunc(th))[..., :, column]
    col = np.concatenate([col, col[:1]])
    ang = np.unwrap(np.arctan2(col[..., 1], col[..., 0]))
    return int(round((ang[-1] - ang[0]) / (2 * np.pi)))


def predicted_rotation(c: Conjugation) -> float:
    """Rotation number of ``A`` implied by a rotation conjugation.

    The frame ``Z`` winds ``k`` times, so ``rot(A) = rot(B) + k omega``
    with ``rot(B) = -phi / (2 pi)`` (``B`` turns clockwise by ``phi``).
    Returned unfolded, modulo 1.
    """
    k = winding_degree(c.zfunc)
    return float((-c.phi / (2 * np.pi) + k * c.omega) % 1.0)


# ---------------------------------------------------------------------------
# resonant case: triangular reduction at gap edges
# ---------------------------------------------------------------------------


def real_solution(w: BlochWave, omega, tol: float = 1e-8) -> np.ndarray:
    """Fourier coefficients of a real ``f`` with ``x_n = f(theta_n)`` solving ``H``.

    Requires ``phi = pi j + pi k omega`` with ``k`` and ``j`` even; then
    ``e^{i phi n} f(theta_n)`` equals ``g(theta_n)`` up to a constant with
    ``g = e^{i k theta / 2} f``, and the larger of ``Re g``, ``Im g`` is
    returned.  Odd ``k`` or ``j`` needs the doubled circle and raises
    :class:`ParityError`.
    """
    dep = dependence_test(w.phi, omega, tol)
    if not dep.dependent:
        raise ValueError("phase is not resonant; use build_y/realify")
    if dep.k % 2 or dep.j % 2:
        raise ParityError("solution is antiperiodic or needs half frequency", k=dep.k, j=dep.j)
    m = dep.k // 2
    g = np.zeros(len(w.coeffs) + 2 * abs(m), dtype=complex)
    K = (len(g) - 1) // 2
    n0 = K - w.N + m
    g[n0 : n0 + len(w.coeffs)] = w.coeffs
    re = 0.5 * (g + np.conj(g[::-1]))
    im = (g - np.conj(g[::-1])) / 2j
    out = re if np.linalg.norm(re) >= np.linalg.norm(im) else im
    return out / np.max(np.abs(out))


def resonant_reduce(fcoeffs: np.ndarray, V: Potential, omega, a: float, M: int = 1024,
                    Kcut: int = 256, div_tol: float = 1e-10, v_tol: float = 1e-8,
                    sol_tol: float = 1e-6) -> Conjugation:
    """Reduce ``(A_{a,V}, omega)`` to ``((1, c), (0, 1))`` from a real solution.

    ``fcoeffs`` are Fourier coefficients (modes ``-K..K``) of a real ``f``
    with ``f(theta + 2 pi omega) + f(theta - 2 pi omega) + V f = a f``.  With
    ``v = (f(theta), f(theta - 2 pi omega))`` and
    ``S = (v | v_perp / |v|^2)`` the cocycle becomes ``((1, c~), (0, 1))``;
    ``c = [c~]`` and ``u(theta + 2 pi omega) - u(theta) = c~ - c`` is solved
    for ``|k| <= Kcut``.  ``Z = S ((1, u), (0, 1))``, ``det Z = 1``.
    """
    om = _omega(omega)
    f = np.asarray(fcoeffs, dtype=complex)
    if np.max(np.abs(f - np.conj(f[::-1]))) > 1e-12 * np.max(np.abs(f)):
        raise ValueError("fcoeffs do not describe a real function")
    if M < 2 * Kcut + 1:
        raise ValueError("M must exceed 2*Kcut")

    def vfun(theta):
        th = np.asarray(theta, dtype=float)
        return np.stack([_fourier_eval(f, th).real, _fourier_eval(f, th - 2 * np.pi * om).real], axis=-1)

    grid = theta_grid(M)
    v = vfun(grid)
    vp = vfun(grid + 2 * np.pi * om)
    A = transfer_matrix(Cocycle(a, V, om), grid)
    Av = np.einsum("tij,tj->ti", A, v)
    vnorm = np.linalg.norm(v, axis=-1)
    top = float(np.max(vnorm))
    plus = float(np.max(np.linalg.norm(Av - vp, axis=-1))) / top
    minus = float(np.max(np.linalg.norm(Av + vp, axis=-1))) / top
    if minus < sol_tol and minus < plus:
        raise ParityError("A v = -v(. + 2 pi omega): antiperiodic solution", residual=minus)
    if plus > sol_tol:
        raise ValueError(f"fcoeffs do not solve the equation at a={a} (residual {plus:.3g})")
    if float(np.min(vnorm)) <= v_tol * top:
        raise VanishingV("v vanishes on the circle", min_norm=float(np.min(vnorm)))

    def sfun(theta):
        vv = vfun(theta)
        n2 = np.sum(vv * vv, axis=-1)
        S = np.empty(vv.shape[:-1] + (2, 2))
        S[..., 0, 0] = vv[..., 0]
        S[..., 1, 0] = vv[..., 1]
        S[..., 0, 1] = -vv[..., 1] / n2
        S[..., 1, 1] = vv[..., 0] / n2
        return S

    S = sfun(grid)
    Sp = sfun(grid + 2 * np.pi * om)
    T = np.linalg.inv(Sp) @ A @ S
    ct = T[:, 0, 1]
    chat = np.fft.fft(ct) / M
    c = float(chat[0].real)
    ks = np.fft.fftfreq(M, 1.0 / M).astype(int)
    keep = (np.abs(ks) <= Kcut) & (ks != 0)
    div = np.exp(2j * np.pi * ks * om) - 1.0
    small = keep & (np.abs(div) < div_tol) & (np.abs(chat) > 1e-14 * np.max(np.abs(chat)))
    if np.any(small):
        k_bad = int(ks[np.argmax(small)])
        raise SmallDivisorOverflow("small divisor in the cohomological equation", k=k_bad,
                                   divisor=float(abs(div[ks == k_bad][0])))
    uhat = np.zeros(M, dtype=complex)
    uhat[keep] = chat[keep] / div[keep]
    tail = float(np.sum(np.abs(chat[~keep & (ks != 0)])))
    u_k = ks[keep]
    u_c = uhat[keep]

    def ufun(theta):
        th = np.asarray(theta, dtype=float)
        return (np.exp(1j * np.multiply.outer(th, u_k)) @ u_c).real

    def zfunc(theta):
        Sv = sfun(theta)
        u = ufun(theta)
        Z = Sv.copy()
        Z[..., :, 1] = Sv[..., :, 1] + u[..., None] * Sv[..., :, 0]
        return Z

    B = np.array([[1.0, c], [0.0, 1.0]])
    Z = zfunc(grid)
    res, _ = conjugation_residual(zfunc, B, V, a, om, grid)
    mean, var = _det_stats(Z)
    info = {"solution_residual": plus, "fourier_tail": tail, "Kcut": Kcut}
    return Conjugation(grid, Z, B, res, (mean, var), "Triangular", zfunc, a, V, om, 0.0, c, info)


def reduce_bloch_wave(w: BlochWave, V: Potential, omega, M: int = 256, tol: float = 1e-8,
                      **kw) -> Conjugation:
    """Rotation reduction for nonresonant ``phi``, triangular otherwise."""
    if dependence_test(w.phi, omega, tol).dependent:
        f = real_solution(w, omega, tol)
        return resonant_reduce(f, V, omega, w.a, **kw)
    return realify(build_y(w, V, omega, M))


def verify_conjugation(c: Conjugation, V: Optional[Potential] = None, a: Optional[float] = None,
                       omega=None) -> dict:
    """Recompute the conjugation residual on a grid twice as fine."""
    V = c.V if V is None else V
    a = c.a if a is None else a
    om = c.omega if omega is None else _omega(omega)
    grid = theta_grid(2 * len(c.thetaGrid))
    mx, mean = conjugation_residual(c.zfunc, c.B, V, a, om, grid)
    return {"max": mx, "mean": mean, "M": len(grid)}


def recomposition_residual(c: Conjugation, M: Optional[int] = None) -> float:
    """``max ||Z(theta + 2 pi omega) B Z(theta)^{-1} - A(theta)|| / max ||A||``."""
    grid = theta_grid(M or 2 * len(c.thetaGrid))
    Z = c.zfunc(grid)
    Zp = c.zfunc(grid + 2 * np.pi * c.omega)
    A = transfer_matrix(Cocycle(c.a, c.V, c.omega), grid)
    R = Zp @ c.B @ np.linalg.inv(Z) - A
    return float(np.max(np.linalg.norm(R, ord=2, axis=(-2, -1))) /
                 np.max(np.linalg.norm(A, ord=2, axis=(-2, -1))))


def constant_conjugation(Z: np.ndarray, B: np.ndarray, V: Potential, a: float, omega,
                         M: int = 64, kind: str = "Raw") -> Conjugation:
    """Conjugation by a constant matrix (free-case checks)."""
    Z = np.asarray(Z)

    def zfunc(theta):
        th = np.asarray(theta, dtype=float)
        return np.broadcast_to(Z, th.shape + Z.shape).copy()

    grid = theta_grid(M)
    om = _omega(omega)
    res, _ = conjugation_residual(zfunc, np.asarray(B), V, a, om, grid)
    Zs = zfunc(grid)
    return Conjugation(grid, Zs, np.asarray(B), res, _det_stats(Zs), kind, zfunc, a, V, om)
