"""Longstaff-Schwartz Monte Carlo for the American put on the state (X, Z).

The exercise policy is fitted on one path set and evaluated on an
independent one, so the reported price carries the usual low bias of a
fixed sub-optimal policy instead of the in-sample foresight bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .model import ModelParams, VolatilityFn
from .sde_sim import SimConfig, simulate

TRAIN_STREAM = 0
EVAL_STREAM = 1


@dataclass(frozen=True)
class LsmcConfig:
    basis_degree: int = 3
    n_paths: int = 100_000
    n_steps: int = 50
    seed: int = 0
    itm_only: bool = True

    def __post_init__(self):
        if not 1 <= int(self.basis_degree) <= 5:
            raise ConfigurationError("basis_degree must lie in [1, 5]")
        n_basis = (self.basis_degree + 1) * (self.basis_degree + 2) // 2
        if int(self.n_paths) <= n_basis:
            raise ConfigurationError(
                f"n_paths={self.n_paths} must exceed the {n_basis} basis functions"
            )
        if int(self.n_steps) < 1:
            raise ConfigurationError("n_steps must be >= 1")

    @property
    def n_basis(self) -> int:
        return (self.basis_degree + 1) * (self.basis_degree + 2) // 2

    def sim_config(self) -> SimConfig:
        return SimConfig(n_paths=self.n_paths, n_steps=self.n_steps, seed=self.seed)


@dataclass
class PriceEstimate:
    price: float
    std_error: float
    n_paths: int
    in_sample_price: float = float("nan")
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"price": self.price, "std_error": self.std_error,
                "n_paths": self.n_paths, "flags": list(self.flags)}


def _basis(x, z, degree):
    cols = [np.ones_like(x)]
    for total in range(1, degree + 1):
        for i in range(total, -1, -1):
            cols.append(x**i * z ** (total - i))
    return np.column_stack(cols)


@dataclass
class _DateFit:
    coef: np.ndarray
    mx: float
    sx: float
    mz: float
    sz: float

    def continuation(self, x, z, degree):
        return _basis((x - self.mx) / self.sx, (z - self.mz) / self.sz, degree) @ self.coef


def _standardise(a):
    m = float(a.mean())
    s = float(a.std())
    return m, (s if s > 1e-12 * max(1.0, abs(m)) else 1.0)


def _fit(x, z, target, degree, flags):
    mx, sx = _standardise(x)
    mz, sz = _standardise(z)
    A = _basis((x - mx) / sx, (z - mz) / sz, degree)
    coef, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
    if rank < A.shape[1]:
        AtA = A.T @ A
        ridge = 1e-8 * max(np.trace(AtA) / A.shape[1], 1e-300)
        coef = np.linalg.solve(AtA + ridge * np.eye(A.shape[1]), A.T @ target)
        if "ridge" not in flags:
            flags.append("ridge")
    return _DateFit(coef, mx, sx, mz, sz)


def _train(params, vol, x0, z0, cfg, flags):
    ps = simulate(params, vol, x0, z0, cfg.sim_config(), stream=TRAIN_STREAM)
    K = params.K
    n = cfg.n_steps
    disc = math.exp(-params.r * params.T / n)
    cash = np.maximum(K - ps.x[:, n], 0.0)
    fits = [None] * (n + 1)
    for k in range(n - 1, 0, -1):
        cash *= disc
        xk, zk = ps.x[:, k], ps.z[:, k]
        intrinsic = np.maximum(K - xk, 0.0)
        rows = intrinsic > 0.0 if cfg.itm_only else np.ones_like(intrinsic, dtype=bool)
        n_rows = int(rows.sum())
        if n_rows == 0:
            continue
        if n_rows <= cfg.n_basis:
            if "sparse_itm" not in flags:
                flags.append("sparse_itm")
            continue
        fit = _fit(xk[rows], zk[rows], cash[rows], cfg.basis_degree, flags)
        fits[k] = fit
        cont = fit.continuation(xk[rows], zk[rows], cfg.basis_degree)
        ex = intrinsic[rows] >= cont
        idx = np.flatnonzero(rows)[ex]
        cash[idx] = intrinsic[idx]
    in_sample = disc * float(cash.mean())
    if all(f is None for f in fits):
        flags.append("no_itm")
    return fits, in_sample


def _apply_policy(params, ps, fits, degree):
    """Exercise index per path (n_steps at expiry) and discounted payoffs."""
    K = params.K
    n = ps.n_steps
    dt = params.T / n
    n_paths = ps.n_paths
    stop = np.full(n_paths, n)
    alive = np.ones(n_paths, dtype=bool)
    for k in range(1, n):
        fit = fits[k]
        if fit is None:
            continue
        xk = ps.x[:, k]
        cand = alive & (xk < K)
        if not cand.any():
            continue
        idx = np.flatnonzero(cand)
        intrinsic = K - xk[idx]
        cont = fit.continuation(xk[idx], ps.z[idx, k], degree)
        hit = idx[intrinsic >= cont]
        stop[hit] = k
        alive[hit] = False
    x_stop = ps.x[np.arange(n_paths), stop]
    payoff = np.maximum(K - x_stop, 0.0) * np.exp(-params.r * dt * stop)
    return stop, payoff


def price_american_put(params: ModelParams, vol: VolatilityFn, x0: float, z0: float,
                       cfg: LsmcConfig = LsmcConfig()) -> PriceEstimate:
    """LSMC price of the American put started at X = x0, Z = z0."""
    flags: list = []
    fits, in_sample = _train(params, vol, x0, z0, cfg, flags)
    ps = simulate(params, vol, x0, z0, cfg.sim_config(), stream=EVAL_STREAM)
    _, payoff = _apply_policy(params, ps, fits, cfg.basis_degree)
    mean = float(payoff.mean())
    se = float(payoff.std(ddof=1) / math.sqrt(len(payoff)))
    intrinsic0 = max(params.K - x0, 0.0)
    if intrinsic0 > 0.0 and intrinsic0 >= mean:
        flags.append("exercise_at_start")
        return PriceEstimate(intrinsic0, 0.0, cfg.n_paths, max(in_sample, intrinsic0), flags)
    return PriceEstimate(mean, se, cfg.n_paths, max(in_sample, intrinsic0), flags)


@dataclass
class ExerciseHistogram:
    """Out-of-sample exercise events binned by exercise date and z."""

    times: np.ndarray
    z_edges: np.ndarray
    counts: np.ndarray          # (n_steps + 1, n_bins)
    x_max: np.ndarray           # largest exercised x per cell, NaN if empty

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def exercise_frequency_surface(params: ModelParams, vol: VolatilityFn, x0: float, z0: float,
                               cfg: LsmcConfig = LsmcConfig(), z_edges=None) -> ExerciseHistogram:
    """Histogram of exercise decisions over (time, z-bin) on the evaluation paths.

    Exercise at expiry counts only in-the-money paths.  Paths outside the
    z-edges are not counted.
    """
    flags: list = []
    fits, _ = _train(params, vol, x0, z0, cfg, flags)
    ps = simulate(params, vol, x0, z0, cfg.sim_config(), stream=EVAL_STREAM)
    stop, _ = _apply_policy(params, ps, fits, cfg.basis_degree)
    rows = np.arange(ps.n_paths)
    x_stop = ps.x[rows, stop]
    z_stop = ps.z[rows, stop]
    exercised = x_stop < params.K
    if z_edges is None:
        z_edges = np.quantile(ps.z, np.linspace(0.0, 1.0, 11))
    z_edges = np.asarray(z_edges, dtype=float)
    n_bins = len(z_edges) - 1
    bins = np.searchsorted(z_edges, z_stop, side="right") - 1
    bins[z_stop == z_edges[-1]] = n_bins - 1
    keep = exercised & (bins >= 0) & (bins < n_bins)
    counts = np.zeros((cfg.n_steps + 1, n_bins), dtype=np.int64)
    np.add.at(counts, (stop[keep], bins[keep]), 1)
    x_max = np.full((cfg.n_steps + 1, n_bins), np.nan)
    for t_idx, b_idx, xv in zip(stop[keep], bins[keep], x_stop[keep]):
        cur = x_max[t_idx, b_idx]
        if not cur >= xv:
            x_max[t_idx, b_idx] = xv
    return ExerciseHistogram(ps.times, z_edges, counts, x_max)
