"""Aubry duality in numbers.

The dual of ``H_{V,omega,phi}`` is the long-range operator

    (L psi)_n = sum_k V_k psi_{n-k} + 2 cos(2 pi omega n + phi) psi_n,

i.e. ``K`` with hopping ``V`` and potential ``2 cos``.  An exponentially
localized eigenvector ``psi`` of ``L`` with eigenvalue ``a`` gives the Bloch
wave ``x_n = e^{i phi n} f(2 pi omega n + theta)`` of ``H`` at energy ``a``,
where ``f(t) = sum_n psi_n e^{i n t}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .cocycle import run_orbits
from .params import Potential, _omega, dist_mod1
from .spectrum import TWO_COS, DEFAULT_PHASES, TruncatedOperator, ids, truncate

DENSE_CAP = 2001
LOG_FLOOR = 1e-13


class NonConvergence(RuntimeError):
    def __init__(self, message, off_mass):
        super().__init__(message)
        self.off_mass = off_mass


@dataclass
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray
    sourceSize: int

    def residuals(self, T: TruncatedOperator) -> np.ndarray:
        D = T.to_dense()
        R = D @ self.vectors - self.vectors * self.values
        return np.linalg.norm(R, axis=0)


@dataclass
class BlochWave:
    """Bloch wave ``x_n = e^{i phi n} f(2 pi omega n + theta)``.

    ``coeffs[j]`` is the Fourier coefficient ``psi_n`` of ``f`` with
    ``n = j - N``.
    """

    a: float
    phi: float
    coeffs: np.ndarray
    decayRate: float = float("nan")
    residual: float = float("nan")
    r2: float = float("nan")

    @property
    def N(self) -> int:
        return (len(self.coeffs) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def f(self, theta):
        """Evaluate ``f(theta) = sum_n psi_n e^{i n theta}``."""
        th = np.asarray(theta, dtype=float)
        out = np.exp(1j * np.multiply.outer(th, self.modes)) @ self.coeffs
        return complex(out) if th.ndim == 0 else out

    def solution(self, n, omega, theta: Optional[float] = None):
        """``x_n`` for integer sites ``n``; ``theta`` defaults to ``phi``."""
        th = self.phi if theta is None else theta
        n = np.asarray(n, dtype=float)
        return np.exp(1j * self.phi * n) * self.f(2 * np.pi * _omega(omega) * n + th)

    def conjugate(self) -> "BlochWave":
        """The complex-conjugate wave: ``f -> conj f``, ``phi -> -phi``.

        ``conj f`` has coefficients ``conj(psi_{-n})``.
        """
        return BlochWave(self.a, (-self.phi) % (2 * np.pi), np.conj(self.coeffs[::-1]).copy(),
                         self.decayRate, self.residual, self.r2)

    def to_json(self) -> dict:
        return {
            "a": float(self.a),
            "phi": float(self.phi),
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
            "decay": float(self.decayRate),
            "residual": float(self.residual),
        }

    @classmethod
    def from_json(cls, d: dict) -> "BlochWave":
        coeffs = np.array([complex(re, im) for re, im in d["coeffs"]])
        return cls(float(d["a"]), float(d["phi"]), coeffs, float(d.get("decay", "nan")),
                   float(d.get("residual", "nan")))


def dual_operator(V: Potential, omega, phi: float, N: int) -> TruncatedOperator:
    """Truncation of the dual operator: hopping ``V_k``, diagonal ``2 cos``."""
    return truncate(V, TWO_COS, omega, phi, N)


# ---------------------------------------------------------------------------
# eigensolvers
# ---------------------------------------------------------------------------


def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi rotations for a real symmetric matrix.

    Returns ``(values, vectors)`` sorted ascending.  Raises
    :class:`NonConvergence` when the off-diagonal mass is still above
    ``tol * ||A||_F`` after ``max_sweeps`` sweeps.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if not np.array_equal(A, A.T):
        raise ValueError("matrix must be symmetric")
    n = A.shape[0]
    Q = np.eye(n)
    scale = np.linalg.norm(A) or 1.0
    off = 0.0
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1 + tau * tau))
                c = 1 / math.sqrt(1 + t * t)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    else:
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off > tol * scale:
            raise NonConvergence(f"Jacobi did not converge in {max_sweeps} sweeps", off)
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def eigenpairs(T: TruncatedOperator, method: str = "lapack", cap: int = DENSE_CAP,
               check: bool = True) -> EigenSystem:
    """Full eigendecomposition of a truncation.

    ``method="lapack"`` calls the banded/tridiagonal LAPACK drivers through
    SciPy; ``method="jacobi"`` runs :func:`jacobi_eigh` on the dense matrix
    (real symmetric only, meant for small sizes).  With ``check`` every pair
    must satisfy ``||T v - lambda v|| <= 1e-10 ||T||``.
    """
    if T.size > cap:
        raise ValueError(f"size {T.size} exceeds the dense cap {cap}; use a smaller window")
    if method == "jacobi":
        if np.iscomplexobj(T.bands):
            raise ValueError("jacobi method handles real symmetric matrices only")
        w, Q = jacobi_eigh(T.to_dense())
    elif method == "lapack":
        if T.band == 0:
            d = T.bands[0].real
            order = np.argsort(d, kind="stable")
            w, Q = d[order], np.eye(T.size)[:, order]
        elif T.band == 1 and not np.iscomplexobj(T.bands):
            w, Q = scipy.linalg.eigh_tridiagonal(T.bands[0], T.bands[1, :-1])
        else:
            w, Q = scipy.linalg.eig_banded(T.bands, lower=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    es = EigenSystem(np.asarray(w), np.asarray(Q), T.size)
    if check:
        norm = max(T.gershgorin(), 1e-300)
        res = es.residuals(T)
        if np.max(res) > 1e-10 * norm:
            raise NonConvergence("eigenpair residual above 1e-10 ||T||", float(np.max(res)))
    return es


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeFit:
    decayRate: float
    r2: float
    peak: int  # index into the vector
    mass_inner: float


def envelope_fit(psi: np.ndarray, floor: float = LOG_FLOOR) -> EnvelopeFit:
    """Exponential envelope of a vector on ``[-N, N]``.

    The envelope ``E(d)`` is the largest ``log |psi_n|`` over sites at
    distance ``>= d`` from the peak.  It is fitted by a line over the outer
    half of its range above ``floor`` (the whole range if that half has too
    few points); the negated slope is the decay rate.  A vector with at most
    one site above ``floor`` has infinite decay rate.
    """
    amp = np.abs(np.asarray(psi))
    n = len(amp)
    N = (n - 1) // 2
    top = amp.max()
    if top == 0:
        raise ValueError("zero vector")
    amp = amp / top
    mass = amp ** 2
    inner = float(mass[N - N // 2 : N + N // 2 + 1].sum() / mass.sum())
    n0 = int(np.argmax(amp))
    L = np.log(np.maximum(amp, floor))
    dist = np.abs(np.arange(n) - n0)
    dmax = int(dist.max())
    best = np.full(dmax + 1, np.log(floor))
    np.maximum.at(best, dist, L)
    env = np.maximum.accumulate(best[::-1])[::-1]
    above = np.nonzero(env > np.log(floor) + 1e-9)[0]
    dtop = int(above.max()) if len(above) else 0
    if dtop < 1:
        return EnvelopeFit(math.inf, 1.0, n0, inner)
    lo = dtop // 2
    d = np.arange(lo, dtop + 1)
    if len(d) < 4:
        d = np.arange(0, dtop + 1)
    y = env[d]
    A = np.vstack([d, np.ones_like(d)]).T.astype(float)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return EnvelopeFit(float(max(-coef[0], 0.0)), r2, n0, inner)


def _residuals(coeffs: np.ndarray, energies: np.ndarray, phi: float, theta: float, V: Potential,
               omega, margin: int) -> np.ndarray:
    """Bloch residuals for the columns of ``coeffs`` (shared ``phi``, ``theta``, ``N``)."""
    N = (coeffs.shape[0] - 1) // 2
    M = max(N - max(V.band, 1) - margin, 1)
    sites = np.arange(-M - 1, M + 2)
    th = 2 * np.pi * _omega(omega) * sites + theta
    E = np.exp(1j * np.multiply.outer(th, np.arange(-N, N + 1)))
    x = np.exp(1j * phi * sites)[:, None] * (E @ coeffs)
    pot = np.asarray(V(th[1:-1]))[:, None]
    r = x[2:] + x[:-2] + (pot - energies[None, :]) * x[1:-1]
    scale = np.max(np.abs(x[1:-1]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, np.max(np.abs(r), axis=0) / scale, np.inf)


def bloch_residual(w: BlochWave, V: Potential, omega, margin: int = 2,
                   theta: Optional[float] = None) -> float:
    """Relative residual of ``x_{n+1} + x_{n-1} + V x_n - a x_n`` at interior sites.

    ``x`` is evaluated from the Fourier coefficients (finite sums), on the
    sites ``|n| <= N - band - margin`` with ``band`` the hopping range of the
    dual operator.
    """
    th = w.phi if theta is None else theta
    return float(_residuals(np.asarray(w.coeffs, dtype=complex)[:, None], np.array([w.a]), w.phi, th,
                            V, omega, margin)[0])


def localized_states(V: Potential, omega, phi: float, N: int, decay_threshold: float = 0.1,
                     r2_min: float = 0.9, mass_min: float = 0.99, residual_tol: Optional[float] = 1e-6,
                     method: str = "lapack") -> list[tuple[float, BlochWave]]:
    """Exponentially localized eigenvectors of the dual operator as Bloch waves.

    A state is accepted when its envelope decay rate is at least
    ``decay_threshold`` with fit ``R^2 >= r2_min``, at least ``mass_min`` of
    its mass sits in ``|n| <= N/2`` and (unless ``residual_tol`` is None)
    its Bloch residual is at most ``residual_tol``.  The Floquet exponent of
    each wave is the operator phase ``phi``.
    """
    T = dual_operator(V, omega, phi, N)
    es = eigenpairs(T, method=method)
    phi = float(phi % (2 * np.pi))
    waves = []
    for i, lam in enumerate(es.values):
        v = es.vectors[:, i]
        fit = envelope_fit(v)
        if fit.decayRate < decay_threshold or fit.r2 < r2_min or fit.mass_inner < mass_min:
            continue
        # fix the global phase so the largest entry is real positive
        c = v[fit.peak]
        psi = v.astype(complex) / (c / abs(c))
        psi /= np.max(np.abs(psi))
        waves.append(BlochWave(float(lam), phi, psi, fit.decayRate, float("nan"), fit.r2))
    if not waves:
        return []
    res = _residuals(np.stack([w.coeffs for w in waves], axis=1), np.array([w.a for w in waves]),
                     phi, phi, V, omega, 2)
    out = []
    for w, r in zip(waves, res):
        w.residual = float(r)
        if residual_tol is not None and not (w.residual <= residual_tol):
            continue
        out.append((w.a, w))
    return out


def ids_duality_table(V: Potential, omega, grid, N: int, phis=None):
    """``(k^H, k^L)`` on ``grid`` at truncation ``N``."""
    ph = DEFAULT_PHASES if phis is None else phis
    kh = np.asarray(ids(TWO_COS, V, omega, ph, N, np.asarray(grid, dtype=float)))
    kl = np.asarray(ids(V, TWO_COS, omega, ph, N, np.asarray(grid, dtype=float)))
    return kh, kl


def ids_duality_check(V: Potential, omega, grid, N: int, phis=None) -> float:
    """``max_a |k^H(a) - k^L(a)|`` over the grid."""
    kh, kl = ids_duality_table(V, omega, grid, N, phis)
    return float(np.max(np.abs(kh - kl)))


def resonant_energies(V: Potential, omega, k: int, N: int = 400, **kw) -> np.ndarray:
    """Energies of localized dual states at the phases ``pi k omega`` and
    ``pi k omega + pi``; these are the edges of the gaps labeled ``+-k``
    (together with higher labels of the same parity)."""
    w = _omega(omega)
    out = []
    for j in (0, 1):
        phi = math.pi * k * w + math.pi * j
        out += [a for a, _ in localized_states(V, omega, phi, N, **kw)]
    return np.sort(np.array(out))


def refine_gap_edge(V: Potential, omega, rough: float, k: int, N: int = 400, window: float = 0.02,
                    steps: int = 200_000, **kw) -> float:
    """The edge of the gap labeled ``k`` next to a rough estimate.

    Resonant phases also produce near-degenerate pairs of states, which are
    the edges of exponentially small neighbouring gaps.  Among the resonant
    energies within ``window`` of ``rough`` the one whose IDS (from the
    rotation number) is closest to ``k omega`` mod 1, either orientation,
    is returned; ties go to the energy closest to ``rough``.
    """
    ev = resonant_energies(V, omega, k, N, **kw)
    if len(ev) == 0:
        raise ValueError("no localized resonant states; increase N or check the coupling")
    near = ev[np.abs(ev - rough) <= window]
    if len(near) == 0:
        return float(ev[np.argmin(np.abs(ev - rough))])
    near = np.unique(near)
    rot = run_orbits(V, omega, near, [0.0], steps)[2][:, 0] / (2 * math.pi * steps)
    k_ids = 1.0 - 2.0 * rot
    kom = k * _omega(omega)
    dist = np.minimum(dist_mod1(k_ids, kom), dist_mod1(k_ids, -kom))
    order = np.lexsort((np.abs(near - rough), np.round(dist / 1e-5)))
    return float(near[order[0]])
