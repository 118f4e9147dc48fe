"""Compiled inner loops: Schrödinger cocycle orbits and banded inertia counts."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# zero/tiny pivots are replaced by -PIVOT_SHIFT (documented count perturbation)
PIVOT_SHIFT = 1e-12


@njit(cache=True)
def _potential_at(theta, v0, ks, cre, cim):
    s = v0
    for i in range(ks.shape[0]):
        kt = ks[i] * theta
        s += 2.0 * (cre[i] * math.cos(kt) - cim[i] * math.sin(kt))
    return s


@njit(cache=True, nogil=True)
def schrodinger_orbits(energies, thetas, omega, v0, ks, cre, cim, n, burn, renorm):
    """Iterate ``A_{a,V}`` along ``theta_{j+1} = theta_j + 2 pi omega``.

    For every (energy, phase) pair returns, over the ``n`` steps that follow
    ``burn`` warm-up steps:

    * ``logm``  log of the operator norm of the matrix product,
    * ``logv``  log growth of a vector aligned during the warm-up,
    * ``ang``   lifted angle advance of that vector, increments taken in
      ``(-pi/2, 3pi/2]`` (the exact branch for Schrödinger matrices),

    and the same three quantities after ``n // 2`` steps.
    """
    E = energies.shape[0]
    P = thetas.shape[0]
    half = n // 2
    out = np.zeros((6, E, P))
    dth = TWO_PI * omega
    for p in range(P):
        for e in range(E):
            a = energies[e]
            x = 1.0
            y = 0.0
            th = thetas[p]
            for j in range(burn):
                c = a - _potential_at(th, v0, ks, cre, cim)
                xn = c * x - y
                y = x
                x = xn
                r = math.hypot(x, y)
                x /= r
                y /= r
                th += dth
            m11 = 1.0
            m12 = 0.0
            m21 = 0.0
            m22 = 1.0
            logm = 0.0
            logv = 0.0
            ang = 0.0
            for j in range(n):
                if j == half:
                    f2 = m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22
                    dt = m11 * m22 - m12 * m21
                    disc = f2 * f2 - 4.0 * dt * dt
                    if disc < 0.0:
                        disc = 0.0
                    out[3, e, p] = logm + 0.5 * math.log(0.5 * (f2 + math.sqrt(disc)))
                    out[4, e, p] = logv
                    out[5, e, p] = ang
                c = a - _potential_at(th, v0, ks, cre, cim)
                # vector step
                xn = c * x - y
                yn = x
                cr = x * yn - y * xn
                dtp = x * xn + y * yn
                inc = math.atan2(cr, dtp)
                if inc <= -HALF_PI:
                    inc += TWO_PI
                ang += inc
                r = math.hypot(xn, yn)
                logv += math.log(r)
                x = xn / r
                y = yn / r
                # matrix product step
                n11 = c * m11 - m21
                n12 = c * m12 - m22
                m21 = m11
                m22 = m12
                m11 = n11
                m12 = n12
                if (j + 1) % renorm == 0:
                    f = math.sqrt(m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22)
                    logm += math.log(f)
                    m11 /= f
                    m12 /= f
                    m21 /= f
                    m22 /= f
                th += dth
            f2 = m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22
            dt = m11 * m22 - m12 * m21
            disc = f2 * f2 - 4.0 * dt * dt
            if disc < 0.0:
                disc = 0.0
            out[0, e, p] = logm + 0.5 * math.log(0.5 * (f2 + math.sqrt(disc)))
            out[1, e, p] = logv
            out[2, e, p] = ang
    return out


@njit(cache=True, nogil=True)
def banded_inertia(band, energies, shift):
    """Number of eigenvalues ``<= a`` of a Hermitian banded matrix.

    ``band[k, j]`` holds entry ``(j + k, j)`` (lower storage, ``band[0]`` is
    the diagonal).  Uses an unpivoted banded LDL^H factorization of
    ``T - a I``; by Sylvester's law the number of negative pivots is the
    number of eigenvalues below ``a``.  For half-bandwidth 1 this is the
    classical Sturm count.  Pivots with ``|d| < shift`` are replaced by
    ``-shift``.
    """
    b = band.shape[0] - 1
    n = band.shape[1]
    E = energies.shape[0]
    counts = np.zeros(E, dtype=np.int64)
    if b == 1:
        off2 = np.empty(n)
        for j in range(n - 1):
            off2[j] = abs(band[1, j]) ** 2
        for e in range(E):
            a = energies[e]
            cnt = 0
            d = band[0, 0].real - a
            if abs(d) < shift:
                d = -shift
            if d < 0.0:
                cnt += 1
            for j in range(1, n):
                d = (band[0, j].real - a) - off2[j - 1] / d
                if abs(d) < shift:
                    d = -shift
                if d < 0.0:
                    cnt += 1
            counts[e] = cnt
        return counts
    for e in range(E):
        a = energies[e]
        w = band.copy()
        for j in range(n):
            w[0, j] = w[0, j] - a
        cnt = 0
        for j in range(n):
            d = w[0, j].real
            if abs(d) < shift:
                d = -shift
            if d < 0.0:
                cnt += 1
            top = min(b, n - 1 - j)
            # multipliers l_i = w[i, j] / d ; Schur update of the trailing band
            for i in range(1, top + 1):
                li = w[i, j] / d
                # rows j+i, columns j+m with m <= i
                for m in range(1, i + 1):
                    w[i - m, j + m] = w[i - m, j + m] - li * np.conj(w[m, j])
            # w[:, j] no longer needed
        counts[e] = cnt
    return counts
