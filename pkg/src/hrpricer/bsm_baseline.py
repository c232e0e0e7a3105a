"""Constant-volatility American put references (binomial tree) and their
exercise boundaries, used as the envelope for the delay-model results."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import kernels
from .errors import ConfigurationError, DomainError
from .model import ModelParams


@dataclass(frozen=True)
class BinomialConfig:
    n_steps: int = 5000

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))


@dataclass(frozen=True)
class ConstantVolBoundary:
    """Early-exercise boundary t -> b(t) of a constant-volatility put."""

    times: np.ndarray
    b: np.ndarray
    sigma: float

    def __call__(self, t):
        return np.interp(t, self.times, self.b)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "b"])
            for t, b in zip(self.times, self.b):
                w.writerow([repr(float(t)), repr(float(b))])


def _check_tree(sigma, params, cfg):
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    dt = params.T / cfg.n_steps
    a = sigma * math.sqrt(dt)
    # p in (0, 1) needs d < exp(r dt) < u
    if a <= params.r * dt or a <= 0.0:
        raise ConfigurationError(
            f"binomial tree degenerates for n_steps={cfg.n_steps}: "
            f"need n_steps > T (r / sigma)^2 = {params.T * (params.r / sigma) ** 2:.3g}"
        )


def crr_american_put(sigma: float, params: ModelParams, x0: float,
                     cfg: BinomialConfig = BinomialConfig()) -> float:
    """American put price on a Cox-Ross-Rubinstein tree."""
    if not (math.isfinite(x0) and x0 > 0.0):
        raise DomainError(f"x0 must be positive, got {x0!r}")
    _check_tree(sigma, params, cfg)
    price, _ = kernels.crr_put(float(x0), params.K, params.r, float(sigma), params.T, cfg.n_steps)
    return price


def european_put_closed_form(sigma, params: ModelParams, x0, t_remaining):
    """Black-Scholes European put; vectorised over ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    K, r = params.K, params.r
    if t_remaining <= 0.0:
        out = np.maximum(K - x0, 0.0)
        return float(out) if out.ndim == 0 else out
    vol = sigma * math.sqrt(t_remaining)
    with np.errstate(divide="ignore"):
        d1 = (np.log(x0 / K) + (r + 0.5 * sigma * sigma) * t_remaining) / vol
    d2 = d1 - vol
    out = K * math.exp(-r * t_remaining) * ndtr(-d2) - x0 * ndtr(-d1)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def _parity_resample(level_times, raw, grid):
    # Even and odd tree levels sit on different lattices; each parity alone is
    # monotone, the interleaved sequence zig-zags.  Resample both and average.
    curves = []
    for parity in (0, 1):
        t = level_times[parity::2]
        b = raw[parity::2]
        ok = ~np.isnan(b)
        t, b = t[ok], b[ok]
        curves.append(np.interp(grid, t, b))
    return 0.5 * (curves[0] + curves[1])


def crr_boundary(sigma: float, params: ModelParams, cfg: BinomialConfig = BinomialConfig(),
                 n_times: int = 201) -> ConstantVolBoundary:
    """Exercise boundary read off the tree, on ``n_times`` uniform times over [0, T].

    Before the first level whose nodes reach the boundary the curve is held at
    its earliest observed value.
    """
    _check_tree(sigma, params, cfg)
    n = cfg.n_steps
    if n < 4:
        raise ConfigurationError("boundary extraction needs n_steps >= 4")
    _, raw = kernels.crr_put(params.K, params.K, params.r, float(sigma), params.T, n)
    raw = raw.copy()
    raw[n] = np.nan
    level_times = np.linspace(0.0, params.T, n + 1)
    grid = np.linspace(0.0, params.T, n_times)
    b = _parity_resample(level_times, raw, grid)
    b[-1] = params.K
    return ConstantVolBoundary(grid, np.minimum(b, params.K), float(sigma))
