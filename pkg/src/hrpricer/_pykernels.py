"""Pure numpy versions of the hot loops.

Each routine mirrors the compiled implementation in ``_ckernels.pyx``
operation for operation, so both backends return the same numbers up to
floating-point reassociation.  Loops run along the line direction and are
vectorised across lines.
"""

import math

import numpy as np


def psor_lines(sub, diag, sup, rhs, obstacle, V, omega, tol, max_iter):
    """Projected SOR on independent tridiagonal LCPs, one per row.

    Solves ``sub*V[i-1] + diag*V[i] + sup*V[i+1] = rhs`` subject to
    ``V >= obstacle`` on the interior nodes of every row.  The first and last
    column of ``V`` are Dirichlet values and stay untouched.  ``V`` is updated
    in place and doubles as the initial guess.

    Returns
    -------
    (int, float)
        Largest iteration count over rows and largest final sweep change.
    """
    n_lines, n = V.shape
    active = np.ones(n_lines, dtype=bool)
    iters = np.zeros(n_lines, dtype=np.int64)
    residual = np.zeros(n_lines)
    for _ in range(max_iter):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        Vr = V[rows]
        sr, ur, rr, orr = sub[rows], sup[rows], rhs[rows], obstacle[rows]
        inv = 1.0 / diag[rows]
        change = np.zeros(rows.size)
        for i in range(1, n - 1):
            y = (rr[:, i] - sr[:, i] * Vr[:, i - 1] - ur[:, i] * Vr[:, i + 1]) * inv[:, i]
            old = Vr[:, i]
            new = np.maximum(orr[:, i], old + omega * (y - old))
            np.maximum(change, np.abs(new - old), out=change)
            Vr[:, i] = new
        V[rows] = Vr
        iters[rows] += 1
        residual[rows] = change
        active[rows] = change > tol
    return int(iters.max(initial=0)), float(residual.max(initial=0.0))


def tridiag_lines(sub, diag, sup, rhs):
    """Thomas algorithm on independent tridiagonal systems, one per row."""
    n_lines, n = rhs.shape
    c = np.empty((n_lines, n))
    d = np.empty((n_lines, n))
    c[:, 0] = sup[:, 0] / diag[:, 0]
    d[:, 0] = rhs[:, 0] / diag[:, 0]
    for j in range(1, n):
        m = diag[:, j] - sub[:, j] * c[:, j - 1]
        c[:, j] = sup[:, j] / m
        d[:, j] = (rhs[:, j] - sub[:, j] * d[:, j - 1]) / m
    out = np.empty((n_lines, n))
    out[:, n - 1] = d[:, n - 1]
    for j in range(n - 2, -1, -1):
        out[:, j] = d[:, j] - c[:, j] * out[:, j + 1]
    return out


def crr_put(S0, K, r, sigma, T, n):
    """Cox-Ross-Rubinstein American put.

    Returns the price and, per tree level, the spot at which continuation
    minus intrinsic value crosses zero (NaN where no node is exercised).
    """
    dt = T / n
    a = sigma * math.sqrt(dt)
    u = math.exp(a)
    d = math.exp(-a)
    disc = math.exp(-r * dt)
    p = (math.exp(r * dt) - d) / (u - d)
    pu = disc * p
    pd = disc * (1.0 - p)

    j = np.arange(n + 1)
    S = S0 * np.exp((2.0 * j - n) * a)
    V = np.maximum(K - S, 0.0)
    boundary = np.full(n + 1, np.nan)
    boundary[n] = K
    for k in range(n - 1, -1, -1):
        S = S0 * np.exp((2.0 * np.arange(k + 1) - k) * a)
        cont = pd * V[: k + 1] + pu * V[1 : k + 2]
        intr = K - S
        g = cont - intr
        ex = (g <= 0.0) & (intr > 0.0)
        V = np.where(ex, intr, cont)
        if ex.any():
            je = int(np.flatnonzero(ex)[-1])
            if je < k:
                g0, g1 = g[je], g[je + 1]
                w = -g0 / (g1 - g0) if g1 != g0 else 0.0
                boundary[k] = S[je] + w * (S[je + 1] - S[je])
            else:
                boundary[k] = S[je]
    return float(V[0]), boundary
