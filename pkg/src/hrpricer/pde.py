"""Finite-difference solver for the American put under the delay GBM.

State coordinates are u = ln x and w = ln y (y the memory average), with a
common step h.  The generator has rank-one diffusion along the direction that
moves x and z together at fixed y, so in (w, u) coordinates all diffusion
sits in u and the w direction is pure transport with speed lam (z - 1).
Because the steps agree, every grid diagonal is a line of constant
z = exp(u - w), which is where the fixed-z analyses read the surface.

Each backward step is split into
  1. implicit first-order upwind transport in w (sign-adaptive),
  2. a theta-scheme in u with the early-exercise constraint, solved as one
     tridiagonal LCP per w-line by projected SOR.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigurationError, ExtrapolationError, SolverError
from .model import ModelParams, VolatilityFn, reversion_zone


def generator_coefficients(params: ModelParams, vol: VolatilityFn, v):
    """Coefficients of the generator in (ln x - ln z, ln z) = (w, v).

    Returns ``(a_w, a_v, d_vv, r)``.  The w direction carries no diffusion.
    Vectorised over ``v``.
    """
    z = np.exp(v)
    s = vol(z)
    lam = params.lam
    a_w = lam * (z - 1.0)
    a_v = params.r + lam - lam * z - 0.5 * s * s
    d_vv = 0.5 * s * s
    if np.ndim(v) == 0:
        return float(a_w), float(a_v), float(d_vv), params.r
    return a_w, a_v, d_vv, params.r


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid in u = ln x and w = ln y sharing the step h.

    ``[v_min, v_max]`` is the band of ln z over which every x-node of the
    u-range is represented; the w-range is derived from it.  ``v_max`` and
    ``v_min`` must sit on the diagonal lattice (a whole number of steps apart).
    """

    u_min: float
    u_max: float
    n_u: int
    v_min: float
    v_max: float
    n_t: int = 256
    theta: float = 1.0
    omega: float = 1.2
    psor_tol: float = 1e-9       # relative to K
    max_iter: Optional[int] = None

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ConfigurationError("u_min must be < u_max")
        if not self.v_min < self.v_max:
            raise ConfigurationError("v_min must be < v_max")
        if int(self.n_u) < 16:
            raise ConfigurationError("n_u must be >= 16")
        if int(self.n_t) < 8:
            raise ConfigurationError("n_t must be >= 8")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if not 0.0 < self.omega < 2.0:
            raise ConfigurationError("omega must lie in (0, 2)")
        object.__setattr__(self, "n_u", int(self.n_u))
        object.__setattr__(self, "n_t", int(self.n_t))
        span = (self.v_max - self.v_min) / self.h
        if abs(span - round(span)) > 1e-6:
            raise ConfigurationError("v-band width must be a whole number of steps h")
        if self.n_v < 16:
            raise ConfigurationError("v-band must hold at least 16 diagonals")

    @property
    def h(self) -> float:
        return (self.u_max - self.u_min) / (self.n_u - 1)

    @property
    def n_v(self) -> int:
        return int(round((self.v_max - self.v_min) / self.h)) + 1

    @property
    def n_w(self) -> int:
        return self.n_u + self.n_v - 1

    @property
    def w_min(self) -> float:
        return self.u_min - self.v_max

    @property
    def u(self) -> np.ndarray:
        return self.u_min + self.h * np.arange(self.n_u)

    @property
    def w(self) -> np.ndarray:
        return self.w_min + self.h * np.arange(self.n_w)

    @property
    def v(self) -> np.ndarray:
        """ln z of the band diagonals, ascending."""
        return self.v_min + self.h * np.arange(self.n_v)

    @property
    def iteration_cap(self) -> int:
        return self.max_iter if self.max_iter is not None else 10 * self.n_u

    @classmethod
    def for_model(cls, params: ModelParams, vol: VolatilityFn, z0: float = 1.0,
                  n_cells: int = 128, n_t: int = 256, **kwargs) -> "GridSpec":
        """Grid with ln K on a node, z = 1 on a diagonal, and a z-band wide
        enough for the reversion zone, z0 and simulated paths.

        ``n_cells`` is the number of steps across the u-range and must be even.
        """
        if n_cells % 2:
            raise ConfigurationError("n_cells must be even")
        half_u = max(4.0 * vol.sigma_hi * math.sqrt(params.T), 0.75)
        h = 2.0 * half_u / n_cells
        lnK = math.log(params.K)
        lo, hi = reversion_zone(params, vol)
        spread = 5.0 * vol.sigma_hi * math.sqrt(min(params.T, 1.0 / (2.0 * params.lam)))
        top = max(spread, math.log(hi) + spread / 2, math.log(z0) + spread)
        bot = min(-spread, math.log(max(lo, 1e-6)) - spread / 2, math.log(z0) - spread)
        k_top = math.ceil(top / h - 1e-9)
        k_bot = math.floor(bot / h + 1e-9)
        return cls(
            u_min=lnK - half_u,
            u_max=lnK + half_u,
            n_u=n_cells + 1,
            v_min=k_bot * h,
            v_max=k_top * h,
            n_t=n_t,
            **kwargs,
        )


@dataclass
class ValueSurface:
    """V(t, x, z) on the (w, u) grid for every stored time slice.

    ``values[s, j, i]`` is the value at time ``times[s]``, w = grid.w[j],
    u = grid.u[i].  Slices are in ascending time; the last one is t = T.
    """

    params: ModelParams
    vol: VolatilityFn
    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.exp(self.grid.u)

    @property
    def z_nodes(self) -> np.ndarray:
        return np.exp(self.grid.v)

    @property
    def payoff_x(self) -> np.ndarray:
        return np.maximum(self.params.K - self.x_nodes, 0.0)

    def _diag_index(self):
        g = self.grid
        m = (g.n_v - 1) - np.arange(g.n_v)          # diagonal offset j - i, z ascending
        return m[:, None] + np.arange(g.n_u)[None, :]

    def values_xz(self, s: int) -> np.ndarray:
        """Slice ``s`` resampled exactly on the band: shape (n_v, n_u), rows z ascending."""
        J = self._diag_index()
        I = np.broadcast_to(np.arange(self.grid.n_u), J.shape)
        return self.values[s][J, I]

    def exercise_mask(self, s: int, tol: Optional[float] = None) -> np.ndarray:
        """True where V - payoff <= tol on the band (x <= K only)."""
        tol = 1e-6 * self.params.K if tol is None else tol
        gap = self.values_xz(s) - self.payoff_x[None, :]
        return (gap <= tol) & (self.x_nodes <= self.params.K)[None, :]

    def to_csv(self, path, every: int = 1):
        """Columns t, x, z, value, exercised over the band."""
        x = self.x_nodes
        z = self.z_nodes
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "x", "z", "value", "exercised"])
            for s in range(0, len(self.times), every):
                vals = self.values_xz(s)
                ex = self.exercise_mask(s)
                t = self.times[s]
                for k in range(len(z)):
                    for i in range(len(x)):
                        wr.writerow([f"{t:.17g}", f"{x[i]:.17g}", f"{z[k]:.17g}",
                                     f"{vals[k, i]:.17g}", int(ex[k, i])])


def _time_bracket(times, t):
    if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
        raise ExtrapolationError(f"t={t} outside stored slices [{times[0]}, {times[-1]}]")
    s = int(np.searchsorted(times, t, side="right")) - 1
    s = min(max(s, 0), len(times) - 2)
    dt = times[s + 1] - times[s]
    a = (t - times[s]) / dt
    return s, min(max(a, 0.0), 1.0)


def _snap(frac):
    r = round(frac)
    return float(r) if abs(frac - r) < 1e-9 else frac


def _bilinear(slice_, grid, u, w):
    fu = _snap((u - grid.u_min) / grid.h)
    fw = _snap((w - grid.w_min) / grid.h)
    if not (0.0 <= fu <= grid.n_u - 1 and 0.0 <= fw <= grid.n_w - 1):
        raise ExtrapolationError(f"(ln x, ln y)=({u:.6g}, {w:.6g}) outside the grid")
    i = min(int(fu), grid.n_u - 2)
    j = min(int(fw), grid.n_w - 2)
    a, b = fu - i, fw - j
    return ((1 - a) * (1 - b) * slice_[j, i] + a * (1 - b) * slice_[j, i + 1]
            + (1 - a) * b * slice_[j + 1, i] + a * b * slice_[j + 1, i + 1])


def value_at(surface: ValueSurface, t: float, x: float, z: float) -> float:
    """Bilinear in (ln x, ln y), linear in time.  No extrapolation.

    At t = T the payoff is returned exactly (after the range check).
    """
    if not (x > 0 and z > 0):
        raise ExtrapolationError("x and z must be positive")
    u = math.log(x)
    w = u - math.log(z)
    s, a = _time_bracket(surface.times, t)
    v0 = _bilinear(surface.values[s], surface.grid, u, w)
    if t >= surface.params.T - 1e-12 * surface.params.T:
        # terminal condition is known in closed form; skip interpolation error
        return max(surface.params.K - x, 0.0)
    if a == 0.0:
        return float(v0)
    v1 = _bilinear(surface.values[s + 1], surface.grid, u, w)
    return float((1 - a) * v0 + a * v1)


def _check_cfl(params, vol, grid):
    if grid.theta >= 0.5:
        return
    dt = params.T / grid.n_t
    d_max = 0.5 * vol.sigma_hi**2
    admissible = grid.h**2 / (2.0 * d_max * (1.0 - 2.0 * grid.theta))
    if dt > admissible:
        raise ConfigurationError(
            f"theta={grid.theta} needs dt <= {admissible:.3g} (n_t >= "
            f"{math.ceil(params.T / admissible)}), got dt={dt:.3g}"
        )


def solve(params: ModelParams, vol: VolatilityFn, grid: GridSpec,
          keep_every: int = 1) -> ValueSurface:
    """Backward time-stepping of the American put complementarity problem.

    ``keep_every`` thins the stored slices (t = 0 and t = T are always kept).
    """
    _check_cfl(params, vol, grid)
    K, r, lam = params.K, params.r, params.lam
    n_t = grid.n_t
    dt = params.T / n_t
    h = grid.h
    theta = grid.theta
    u = grid.u
    x = np.exp(u)
    n_w, n_u = grid.n_w, grid.n_u

    # z at node (j, i) is exp(v_max + (i - j) h); built from integer offsets so
    # the z = 1 diagonal carries exactly zero transport speed.
    offs = np.arange(n_u)[None, :] - np.arange(n_w)[:, None]
    v_node = grid.v_max + offs * h
    z_node = np.exp(v_node)
    s = vol(z_node)
    d = 0.5 * s * s
    a_u = r - d
    lo = d / h**2 - a_u / (2 * h)
    up = d / h**2 + a_u / (2 * h)
    ce = -2.0 * d / h**2 - r
    sub = -theta * dt * lo
    dia = 1.0 - theta * dt * ce
    sup = -theta * dt * up
    sub, dia, sup = (np.ascontiguousarray(m) for m in (sub, dia, sup))

    # transport along w for each fixed u: rows are u-lines, columns j
    a_w = lam * np.where(offs == 0, 0.0, z_node - 1.0)
    cw = (dt / h) * np.abs(a_w)
    cw[0, :] = np.where(a_w[0, :] < 0, 0.0, cw[0, :])
    cw[-1, :] = np.where(a_w[-1, :] > 0, 0.0, cw[-1, :])
    t_sub = np.where(a_w < 0, -cw, 0.0).T.copy()
    t_sup = np.where(a_w > 0, -cw, 0.0).T.copy()
    t_dia = (1.0 + cw).T.copy()

    payoff = np.maximum(K - x, 0.0)
    obstacle = np.ascontiguousarray(np.broadcast_to(payoff, (n_w, n_u)))
    tol = grid.psor_tol * K
    cap = grid.iteration_cap

    keep = sorted(set(range(0, n_t + 1, keep_every)) | {0, n_t})
    stored = {}
    V = obstacle.copy()
    stored[n_t] = V.copy()
    max_it = 0
    max_res = 0.0
    for step in range(n_t - 1, -1, -1):
        Vs = kernels.tridiag_lines(t_sub, t_dia, t_sup, np.ascontiguousarray(V.T)).T
        if theta < 1.0:
            ex = np.zeros_like(Vs)
            ex[:, 1:-1] = (lo[:, 1:-1] * Vs[:, :-2] + ce[:, 1:-1] * Vs[:, 1:-1]
                           + up[:, 1:-1] * Vs[:, 2:])
            rhs = Vs + (1.0 - theta) * dt * ex
        else:
            rhs = Vs
        rhs = np.ascontiguousarray(rhs)
        V = np.ascontiguousarray(np.maximum(Vs, obstacle))
        V[:, 0] = payoff[0]
        V[:, -1] = payoff[-1]
        it, res = kernels.psor_lines(sub, dia, sup, rhs, obstacle, V, grid.omega, tol, cap)
        max_it = max(max_it, it)
        max_res = max(max_res, res)
        if res > tol:
            raise SolverError(
                f"PSOR did not converge within {cap} iterations at t={step * dt:.6g}; "
                f"residual {res:.3g} > {tol:.3g}",
                residual=res,
            )
        if step in keep:
            stored[step] = V.copy()

    steps = sorted(stored)
    times = np.array([k * dt for k in steps])
    values = np.stack([stored[k] for k in steps])
    stats = {"max_psor_iterations": max_it, "max_psor_residual": max_res,
             "backend": kernels.BACKEND}
    return ValueSurface(params, vol, grid, times, values, stats)
