"""Finite truncations of the operators ``K_{W,V,omega,phi}`` and their IDS.

``(K x)_n = sum_k W_k x_{n-k} + V(2 pi omega n + phi) x_n`` restricted to
``[-N, N]`` with zero boundary conditions.  The Schrödinger operator is
``K`` with ``W = 2 cos`` and its long-range dual is ``K`` with the roles of
``W`` and ``V`` exchanged.

Eigenvalues are counted by inertia (see :func:`eigen_count`), never by
diagonalization.  Gaps are plateaus of the IDS; labels are the integers
``k`` with ``ids = k omega (mod 1)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .cocycle import orbit_stats_grid, run_orbits
from .params import Frequency, Potential, _omega, dist_mod1

TWO_COS = Potential.cosine(2.0)
DEFAULT_PHASES = (0.1234, 1.7342, 3.3151, 4.9087)


def is_two_cos(W: Potential) -> bool:
    return W.coeffs == TWO_COS.coeffs


@dataclass(frozen=True)
class TruncatedOperator:
    """Banded Hermitian restriction of ``K`` to ``[-N, N]``.

    ``bands[k, j]`` is entry ``(j + k, j)``; ``bands[0]`` is the diagonal.
    """

    N: int
    band: int
    bands: np.ndarray
    phi: float = 0.0
    dropped: float = 0.0  # hopping mass removed by band truncation

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def diagonal(self) -> np.ndarray:
        return self.bands[0].real

    def entry(self, i: int, j: int):
        """Matrix entry with 0-based indices."""
        k = i - j
        if abs(k) > self.band:
            return 0.0
        if k >= 0:
            return self.bands[k, j]
        return np.conj(self.bands[-k, i])

    def to_dense(self) -> np.ndarray:
        n = self.size
        dt = complex if np.iscomplexobj(self.bands) else float
        T = np.zeros((n, n), dtype=dt)
        T[np.arange(n), np.arange(n)] = self.bands[0].real
        for k in range(1, self.band + 1):
            idx = np.arange(n - k)
            T[idx + k, idx] = self.bands[k, : n - k]
            T[idx, idx + k] = np.conj(self.bands[k, : n - k])
        return T

    def gershgorin(self) -> float:
        """Bound on the spectral radius."""
        off = 2 * np.sum(np.abs(self.bands[1:, 0])) if self.band else 0.0
        return float(np.max(np.abs(self.diagonal)) + off)


def truncate(W: Potential, V: Potential, omega, phi: float, N: int, band_tol: float = 0.0) -> TruncatedOperator:
    """Restriction of ``K_{W,V,omega,phi}`` to ``[-N, N]``.

    Hopping harmonics are kept up to the smallest ``band`` with
    ``sum_{|k| > band} |W_k| <= band_tol``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    hop_mass = sum(abs(v) for k, v in W.coeffs.items() if k != 0)
    if hop_mass > 0 and band_tol >= hop_mass:
        raise ValueError("band_tol would truncate the entire hopping")
    band = W.band
    dropped = 0.0
    while band > 0:
        d = dropped + abs(W.coeff(band)) + abs(W.coeff(-band))
        if d > band_tol:
            break
        dropped = d
        band -= 1
    n = 2 * N + 1
    complex_hop = any(W.coeff(k).imag != 0 for k in range(1, band + 1))
    bands = np.zeros((band + 1, n), dtype=complex if complex_hop else float)
    sites = np.arange(-N, N + 1)
    bands[0] = W.coeff(0).real + np.asarray(V(2 * np.pi * _omega(omega) * sites + phi))
    for k in range(1, band + 1):
        w = W.coeff(k)
        bands[k, : n - k] = w if complex_hop else w.real
    return TruncatedOperator(N, band, bands, float(phi), float(dropped))


def schrodinger(V: Potential, omega, phi: float, N: int) -> TruncatedOperator:
    return truncate(TWO_COS, V, omega, phi, N)


def eigen_count(T: TruncatedOperator, a):
    """Number of eigenvalues ``<= a`` (``a`` scalar or array).

    Sturm sequence for tridiagonal ``T``, unpivoted banded LDL^H inertia
    otherwise; a pivot of modulus below ``1e-12`` is replaced by ``-1e-12``.
    """
    e = np.atleast_1d(np.asarray(a, dtype=float))
    c = _kernels.banded_inertia(np.ascontiguousarray(T.bands), e, _kernels.PIVOT_SHIFT)
    return int(c[0]) if np.ndim(a) == 0 else c


def _phase_list(phis) -> np.ndarray:
    if phis is None:
        return np.array(DEFAULT_PHASES)
    if np.ndim(phis) == 0:
        return np.array([float(phis)])
    return np.asarray(phis, dtype=float)


def _ids_per_phase(W, V, omega, phis, N, a, threads: int = 1) -> np.ndarray:
    e = np.atleast_1d(np.asarray(a, dtype=float))

    def one(phi):
        return eigen_count(truncate(W, V, omega, phi, N), e) / (2 * N + 1)

    if threads > 1 and len(phis) > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, phis))
    else:
        rows = [one(p) for p in phis]
    return np.array(rows)


def ids(W: Potential, V: Potential, omega, phis, N: int, a, threads: int = 1):
    """Finite-volume IDS ``k^N`` averaged over the phases ``phis``."""
    if N < 8:
        raise ValueError("N must be >= 8")
    vals = _ids_per_phase(W, V, omega, _phase_list(phis), N, a, threads).mean(axis=0)
    return float(vals[0]) if np.ndim(a) == 0 else vals


def ids_with_error(W: Potential, V: Potential, omega, phis, N: int, a, threads: int = 1):
    """IDS plus the heuristic error ``phase spread + |k^N - k^{N/2}|``."""
    ph = _phase_list(phis)
    full = _ids_per_phase(W, V, omega, ph, N, a, threads)
    half = _ids_per_phase(W, V, omega, ph, max(N // 2, 1), a, threads).mean(axis=0)
    val = full.mean(axis=0)
    err = (full.max(axis=0) - full.min(axis=0)) + np.abs(val - half)
    if np.ndim(a) == 0:
        return float(val[0]), float(err[0])
    return val, err


def free_ids(a):
    """Closed-form IDS of the free operator, ``1 - arccos(a/2)/pi`` on [-2, 2]."""
    a = np.asarray(a, dtype=float)
    out = 1.0 - np.arccos(np.clip(a / 2, -1, 1)) / np.pi
    return float(out) if out.ndim == 0 else out


def free_dos(a):
    """Density of states ``1 / (pi sqrt(4 - a^2))`` inside the free band."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(a) < 2, 1.0 / (np.pi * np.sqrt(np.maximum(4 - a * a, 0))), 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scans and gaps
# ---------------------------------------------------------------------------


@dataclass
class SpectralScan:
    grid: np.ndarray
    ids: np.ndarray
    ids_err: np.ndarray
    lyap: Optional[np.ndarray] = None
    rot: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, a in enumerate(self.grid):
            yield (
                float(a),
                float(self.ids[i]),
                float(self.ids_err[i]),
                None if self.lyap is None else float(self.lyap[i]),
                None if self.rot is None else float(self.rot[i]),
            )


def scan(W: Potential, V: Potential, omega, grid, N: int, phis=None, cocycle: bool = False,
         steps: int = 100_000, threads: int = 1) -> SpectralScan:
    """IDS (and optionally Lyapunov exponent / rotation number) on a grid.

    Cocycle quantities are only defined for the Schrödinger case ``W = 2 cos``;
    they come from one orbit started at the first phase (the skew shift is
    uniquely ergodic, so one orbit suffices).
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    ph = _phase_list(phis)
    val, err = ids_with_error(W, V, omega, ph, N, g, threads)
    lyap = rot = None
    if cocycle:
        if not is_two_cos(W):
            raise ValueError("cocycle quantities need the Schrödinger hopping W = 2 cos")
        st = orbit_stats_grid(V, omega, g, ph[:1], steps)
        lyap, rot = st["lyap"], st["rot"]
    meta = {"W": W, "V": V, "omega": omega, "phis": ph, "N": N}
    return SpectralScan(g, np.asarray(val), np.asarray(err), lyap, rot, meta)


@dataclass(frozen=True)
class Gap:
    lo: float
    hi: float
    idsValue: float
    label: Optional[int] = None
    collapsed: bool = False

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "ids": self.idsValue, "label": self.label,
                "collapsed": self.collapsed}


def default_plateau_tol(N: int) -> float:
    """Two Dirichlet edge states per gap plus one count of slack."""
    return 2.5 / (2 * N + 1)


def find_gaps(s: SpectralScan, plateau_tol: Optional[float] = None, refine: bool = True,
              edge_tol: float = 1e-9, omega=None, kmax: int = 50, label_tol: float = 2e-3) -> list[Gap]:
    """Plateaus of the scanned IDS, with endpoints refined by bisection.

    A plateau is a maximal run of grid points whose IDS stays within
    ``plateau_tol`` of the first point of the run.  Endpoints are refined
    on the integer-valued eigenvalue count at the scan's ``N`` and phases.
    Gaps narrower than the grid spacing after refinement are flagged
    ``collapsed``.  When ``omega`` is given each gap is labeled.
    """
    g, v = s.grid, s.ids
    N = s.meta.get("N")
    tol = plateau_tol if plateau_tol is not None else default_plateau_tol(N)
    runs = []
    i = 0
    n = len(g)
    while i < n - 1:
        j = i
        while j + 1 < n and abs(v[j + 1] - v[i]) <= tol:
            j += 1
        if j > i:
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    if not runs:
        return []
    values = [float(np.median(v[i : j + 1])) for i, j in runs]
    spacing = float(np.min(np.diff(g))) if n > 1 else 0.0

    los, his = [], []
    lo_brackets, hi_brackets, lo_val, hi_val = [], [], [], []
    for (i, j), val in zip(runs, values):
        inside = np.abs(v[i : j + 1] - val) <= tol
        p = i + int(np.argmax(inside))
        q = j - int(np.argmax(inside[::-1]))
        los.append(g[p])
        his.append(g[q])
        lo_brackets.append((g[p - 1], g[p]) if p > 0 else None)
        hi_brackets.append((g[q], g[q + 1]) if q < n - 1 else None)
    if refine and s.meta.get("W") is not None:
        los = _refine_edges(s, lo_brackets, values, tol, los, edge_tol, left=True)
        his = _refine_edges(s, hi_brackets, values, tol, his, edge_tol, left=False)
    gaps = []
    for lo, hi, val in zip(los, his, values):
        lab = gap_label(val, omega, kmax, label_tol) if omega is not None else None
        gaps.append(Gap(float(lo), float(hi), val, lab, bool(hi - lo < spacing)))
    return gaps


def _refine_edges(s, brackets, values, tol, start, edge_tol, left):
    """Vectorized bisection of all plateau edges at once."""
    idx = [i for i, b in enumerate(brackets) if b is not None]
    out = list(start)
    if not idx:
        return out
    # out_pt: a point outside the plateau; in_pt: a point inside
    if left:
        out_pt = np.array([brackets[i][0] for i in idx])
        in_pt = np.array([brackets[i][1] for i in idx])
    else:
        in_pt = np.array([brackets[i][0] for i in idx])
        out_pt = np.array([brackets[i][1] for i in idx])
    val = np.array([values[i] for i in idx])
    m = s.meta
    while np.max(np.abs(in_pt - out_pt)) > edge_tol:
        mid = 0.5 * (in_pt + out_pt)
        k = ids(m["W"], m["V"], m["omega"], m["phis"], m["N"], mid)
        inside = np.abs(k - val) <= tol
        in_pt = np.where(inside, mid, in_pt)
        out_pt = np.where(inside, out_pt, mid)
    for t, i in enumerate(idx):
        out[i] = in_pt[t]
    return out


def gap_label(ids_value, omega, kmax: int = 50, tol: float = 2e-3) -> Optional[int]:
    """Smallest ``|k| <= kmax`` with ``ids = k omega (mod 1)`` within ``tol``.

    Both orientations are admitted (``k omega`` and ``-k omega`` mod 1); the
    returned sign is the one that matches, positive on ties.  ``ids`` values
    0 and 1 both carry the label 0.
    """
    if isinstance(ids_value, Gap):
        ids_value = ids_value.idsValue
    w = _omega(omega)
    for k in range(0, kmax + 1):
        for kk in ((0,) if k == 0 else (k, -k)):
            if dist_mod1(ids_value, kk * w) <= tol:
                return kk
    return None


def label_distance(ids_value: float, k: int, omega) -> float:
    """``|ids - fold(k omega)|`` with both orientations admitted."""
    return float(dist_mod1(ids_value, k * _omega(omega)))


# ---------------------------------------------------------------------------
# nonreducibility diagnostics: delta(a1, a2), classification of energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IDSContext:
    """How to evaluate the IDS for slopes.

    ``method="count"`` uses finite truncations (``N``, ``phis``);
    ``method="rotation"`` uses ``ids = 1 - 2 rot`` from cocycle orbits of
    ``steps`` iterations (Schrödinger case only), which resolves much
    smaller energy increments.
    """

    V: Potential
    omega: Frequency
    W: Potential = TWO_COS
    method: str = "rotation"
    N: int = 2000
    phis: Sequence[float] = DEFAULT_PHASES
    steps: int = 400_000
    burn: int = 0
    theta0: float = 0.0

    def __call__(self, a):
        if self.method == "count":
            return ids(self.W, self.V, self.omega, self.phis, self.N, a)
        if self.method == "rotation":
            if not is_two_cos(self.W):
                raise ValueError("rotation-based IDS needs W = 2 cos")
            raw = run_orbits(self.V, self.omega, np.atleast_1d(a), [self.theta0], self.steps, self.burn)
            rot = raw[2][:, 0] / (2 * math.pi * self.steps)
            out = 1.0 - 2.0 * rot
            return float(out[0]) if np.ndim(a) == 0 else out
        raise ValueError(f"unknown IDS method {self.method!r}")


def ids_slope(a1: float, a2: float, ctx: IDSContext) -> float:
    """``delta(a1, a2) = |(k(a1) - k(a2)) / (a1 - a2)|``."""
    if a1 == a2:
        raise ValueError("a1 and a2 must differ")
    k = ctx(np.array([a1, a2]))
    return float(abs(k[0] - k[1]) / abs(a1 - a2))


@dataclass(frozen=True)
class EnergyClass:
    kind: str  # GapInterior | GapEdgeSqrt | SmoothPoint | Undetermined
    exponent: float
    r2: float
    h: tuple
    delta: tuple


def _loglog_fit(h, y):
    x = np.log(h)
    z = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((z - pred) ** 2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(math.exp(coef[1])), r2, ss_res


def classify_energy(a: float, V: Potential, omega, h_sequence: Sequence[float],
                    ctx: Optional[IDSContext] = None, zero_tol: float = 1e-3,
                    exp_tol: float = 0.15, max_resid: float = 0.5) -> EnergyClass:
    """Growth exponent of ``delta(a, a +- h)`` as ``h -> 0``.

    ``delta`` is the larger of the two one-sided slopes.  Exponent near
    ``-1/2`` means a square-root gap edge (``m(a) = infinity``), near 0 a
    point where the IDS is differentiable; slopes all below ``zero_tol``
    mean ``a`` is inside a gap.  A poor log-log fit yields ``Undetermined``.
    """
    h = np.asarray(h_sequence, dtype=float)
    if h.ndim != 1 or len(h) < 3 or np.any(np.diff(h) >= 0) or np.any(h <= 0):
        raise ValueError("h_sequence must be positive, decreasing, with >= 3 entries")
    ctx = ctx or IDSContext(V, omega)
    pts = np.concatenate([[a], a + h, a - h])
    k = ctx(pts)
    dr = np.abs(k[1 : 1 + len(h)] - k[0]) / h
    dl = np.abs(k[1 + len(h) :] - k[0]) / h
    delta = np.maximum(dr, dl)
    if np.all(delta < zero_tol):
        return EnergyClass("GapInterior", 0.0, 1.0, tuple(h), tuple(delta))
    if np.any(delta <= 0):
        return EnergyClass("Undetermined", float("nan"), 0.0, tuple(h), tuple(delta))
    ex, _, r2, ss = _loglog_fit(h, delta)
    rms = math.sqrt(ss / len(h))
    if rms > max_resid:
        kind = "Undetermined"
    elif abs(ex + 0.5) <= exp_tol:
        kind = "GapEdgeSqrt"
    elif abs(ex) <= exp_tol:
        kind = "SmoothPoint"
    else:
        kind = "Undetermined"
    return EnergyClass(kind, ex, r2, tuple(h), tuple(delta))


@dataclass(frozen=True)
class DeiftSimonPoint:
    a: float
    ids: float
    slope: float
    lyap: float
    value: float  # 2 pi sin(pi ids) slope

    @property
    def ok(self) -> bool:
        return self.value >= 0.9


def deift_simon_check(V: Potential, omega, energies, h: float = 2e-3, N: int = 20_000,
                      phis=None, steps: int = 100_000) -> list[DeiftSimonPoint]:
    """Evaluate ``2 pi sin(pi k) dk/da`` by centered differences of the
    finite-volume IDS at each energy, with the measured Lyapunov exponent."""
    e = np.asarray(energies, dtype=float)
    ph = _phase_list(phis if phis is not None else np.linspace(0, 2 * np.pi, 16, endpoint=False) + 0.05)
    pts = np.concatenate([e - h, e, e + h])
    k = ids(TWO_COS, V, omega, ph, N, pts)
    m = len(e)
    km, k0, kp = k[:m], k[m : 2 * m], k[2 * m :]
    slope = (kp - km) / (2 * h)
    lyap = orbit_stats_grid(V, omega, e, 0.0, steps)["lyap"]
    val = 2 * np.pi * np.sin(np.pi * k0) * slope
    return [DeiftSimonPoint(float(e[i]), float(k0[i]), float(slope[i]), float(lyap[i]), float(val[i]))
            for i in range(m)]
