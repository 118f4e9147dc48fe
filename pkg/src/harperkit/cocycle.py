"""Schrödinger cocycles: transfer matrices, Lyapunov exponents, rotation numbers.

The cocycle ``(A_{a,V}, omega)`` acts by ``u_{n+1} = A(theta_n) u_n`` with
``theta_{n+1} = theta_n + 2 pi omega`` and

    A(theta) = [[a - V(theta), -1],
                [1,             0]].

Rotation numbers are measured in cycles per step.  Vectors are tracked on
the unit circle and the counterclockwise advance is counted as positive,
which gives ``rot = (1 - ids) / 2`` for the free operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .params import Frequency, Potential, _omega, fold_mod1

DEFAULT_PHASES = 16


@dataclass(frozen=True)
class Cocycle:
    a: float
    V: Potential
    omega: Frequency

    def matrix(self, theta):
        return transfer_matrix(self, theta)


@dataclass(frozen=True)
class OrbitStats:
    N: int
    lyap: float
    rot: float
    errEst: float


def transfer_matrix(c: Cocycle, theta):
    """``A_{a,V}(theta)``; a stack of shape ``theta.shape + (2, 2)`` for arrays."""
    th = np.asarray(theta, dtype=float)
    out = np.zeros(th.shape + (2, 2))
    out[..., 0, 0] = c.a - np.asarray(c.V(th))
    out[..., 0, 1] = -1.0
    out[..., 1, 0] = 1.0
    return out


def _fourier_args(V: Potential):
    pos = sorted(k for k in V.coeffs if k > 0)
    ks = np.array(pos, dtype=float)
    cre = np.array([V.coeffs[k].real for k in pos])
    cim = np.array([V.coeffs[k].imag for k in pos])
    return float(V.coeff(0).real), ks, cre, cim


def run_orbits(V: Potential, omega, energies, thetas, n: int, burn: int = 0,
               renorm_every: int = 32) -> np.ndarray:
    """Raw orbit accumulators for every (energy, phase) pair.

    Returns an array of shape ``(6, E, P)``: matrix log-norm, vector log
    growth and lifted angle after ``n`` steps, then the same after ``n // 2``.
    See :func:`harperkit._kernels.schrodinger_orbits`.
    """
    if n < 2:
        raise ValueError("need at least two steps")
    if renorm_every < 1:
        raise ValueError("renorm_every must be >= 1")
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    t = np.atleast_1d(np.asarray(thetas, dtype=float))
    v0, ks, cre, cim = _fourier_args(V)
    return _kernels.schrodinger_orbits(e, t, _omega(omega), v0, ks, cre, cim,
                                       int(n), int(burn), int(renorm_every))


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def lyapunov(c: Cocycle, theta0: float = 0.0, N: int = 100_000, renorm_every: int = 32,
             burn: int = 0) -> float:
    """Lyapunov exponent (nats per step) of the cocycle along one orbit.

    With ``burn == 0`` this is ``(1/N) log ||A(theta_{N-1}) ... A(theta_0)||``,
    renormalizing the product every ``renorm_every`` steps.  With ``burn > 0``
    a vector is first aligned with the expanding direction during ``burn``
    steps and its growth over the next ``N`` steps is reported instead, which
    removes the ``O(log ||Z|| / N)`` bias near gap edges.
    """
    return float(lyapunov_grid(c.V, c.omega, [c.a], theta0, N, renorm_every, burn)[0])


def lyapunov_grid(V: Potential, omega, energies, theta0=0.0, N: int = 100_000,
                  renorm_every: int = 32, burn: int = 0) -> np.ndarray:
    """:func:`lyapunov` on an energy grid, averaged over the supplied phases."""
    raw = run_orbits(V, omega, energies, np.atleast_1d(theta0), N, burn, renorm_every)
    g = (raw[1] if burn > 0 else raw[0]) / N
    return np.maximum(g.mean(axis=1), 0.0)


def rotation_number(c: Cocycle, theta0: float = 0.0, N: int = 100_000, fold: bool = True) -> float:
    """Fibered rotation number in cycles per step, folded into ``[0, 1/2]``."""
    return float(rotation_grid(c.V, c.omega, [c.a], theta0, N, fold=fold)[0])


def rotation_grid(V: Potential, omega, energies, theta0=0.0, N: int = 100_000, burn: int = 0,
                  fold: bool = True) -> np.ndarray:
    raw = run_orbits(V, omega, energies, np.atleast_1d(theta0), N, burn)
    rot = (raw[2] / (2 * math.pi * N)).mean(axis=1)
    return fold_mod1(rot) if fold else rot


def orbit_stats(c: Cocycle, theta0: float = 0.0, N: int = 100_000, burn: int = 0) -> OrbitStats:
    """Lyapunov exponent and rotation number with a half-orbit error estimate."""
    s = orbit_stats_grid(c.V, c.omega, [c.a], theta0, N, burn)
    return OrbitStats(N, float(s["lyap"][0]), float(s["rot"][0]), float(s["err"][0]))


def orbit_stats_grid(V: Potential, omega, energies, theta0=0.0, N: int = 100_000, burn: int = 0,
                     renorm_every: int = 32) -> dict:
    """Vectorized :func:`orbit_stats`.

    ``theta0`` may be a sequence of phases; estimates are then phase
    averages (``phase_average_thetas`` gives the default 16-phase set).
    Returns a dict of arrays ``lyap``, ``rot``, ``err``.
    """
    raw = run_orbits(V, omega, energies, np.atleast_1d(theta0), N, burn, renorm_every)
    h = N // 2
    lyap_idx = 1 if burn > 0 else 0
    lyap = (raw[lyap_idx] / N).mean(axis=1)
    lyap_h = (raw[3 + lyap_idx] / h).mean(axis=1)
    rot = (raw[2] / (2 * math.pi * N)).mean(axis=1)
    rot_h = (raw[5] / (2 * math.pi * h)).mean(axis=1)
    err = np.maximum(np.abs(lyap - lyap_h), np.abs(rot - rot_h))
    return {"lyap": np.maximum(lyap, 0.0), "rot": fold_mod1(rot), "err": err,
            "rot_raw": rot}


def phase_average_thetas(count: int = DEFAULT_PHASES) -> np.ndarray:
    return 2 * np.pi * (np.arange(count) + 0.5) / count


def free_lyapunov(a):
    """Closed form ``log((|a| + sqrt(a^2 - 4)) / 2)`` outside ``[-2, 2]``, else 0."""
    a = np.abs(np.asarray(a, dtype=float))
    out = np.where(a > 2, np.log((a + np.sqrt(np.maximum(a * a - 4, 0))) / 2), 0.0)
    return _scalar_or_array(out, a)


def free_rotation(a):
    """Closed form ``arccos(a/2) / (2 pi)`` clipped to ``[0, 1/2]``."""
    a = np.asarray(a, dtype=float)
    out = np.arccos(np.clip(a / 2, -1, 1)) / (2 * np.pi)
    return _scalar_or_array(out, a)


# ---------------------------------------------------------------------------
# general SL(2,R) cocycles (used for Floquet matrices and conjugated cocycles)
# ---------------------------------------------------------------------------


def matrix_rotation_number(mat: Callable[[np.ndarray], np.ndarray] | np.ndarray, omega,
                           theta0: float = 0.0, N: int = 10_000, fold: bool = True) -> float:
    """Rotation number of a general cocycle given as ``theta -> 2x2`` (or a
    constant matrix).  Angle increments are taken in ``(-pi, pi]``, which is
    the correct lift for cocycles close to rotations by less than half a turn.
    """
    w = _omega(omega)
    th = theta0 + 2 * np.pi * w * np.arange(N)
    if callable(mat):
        As = np.asarray(mat(th), dtype=float)
    else:
        As = np.broadcast_to(np.asarray(mat, dtype=float), (N, 2, 2))
    u = np.array([1.0, 0.0])
    total = 0.0
    for j in range(N):
        un = As[j] @ u
        total += math.atan2(u[0] * un[1] - u[1] * un[0], u[0] * un[0] + u[1] * un[1])
        u = un / math.hypot(un[0], un[1])
    rot = total / (2 * math.pi * N)
    return float(fold_mod1(rot)) if fold else rot
