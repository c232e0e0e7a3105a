"""Seeded simulation of (X, Y, Z) on a uniform time grid.

X and Z are driven by the same Brownian increment each step.  Y is
co-simulated with an exponential integrator so that Z can be audited against
X / Y.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PositivityError, SimulationError
from .model import ModelParams, VolatilityFn, reversion_zone

LOG_EULER = "log_euler"
EULER = "euler"
_SCHEMES = {"logeuler": LOG_EULER, "log_euler": LOG_EULER, "euler": EULER}

# Paths per RNG block.  Part of the stream definition: changing it changes results.
BLOCK_PATHS = 256
_U64 = 2**64


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    n_steps: int = 250
    seed: int = 0
    scheme: str = LOG_EULER
    antithetic: bool = False

    def __post_init__(self):
        if int(self.n_paths) < 1 or int(self.n_steps) < 1:
            raise ConfigurationError("n_paths and n_steps must be >= 1")
        if not 0 <= int(self.seed) < _U64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        scheme = _SCHEMES.get(str(self.scheme).lower())
        if scheme is None:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.antithetic and int(self.n_paths) % 2:
            raise ConfigurationError("antithetic pairing needs an even n_paths")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "scheme", scheme)


@dataclass(frozen=True)
class PathSet:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    increments_digest: str
    consistency_tol: float

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def n_steps(self) -> int:
        return self.x.shape[1] - 1

    def to_csv(self, path):
        """Rows ordered path-major, time-minor; 17 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "path_id", "x", "y", "z"])
            for p in range(self.n_paths):
                for k, t in enumerate(self.times):
                    w.writerow([f"{t:.17g}", p, f"{self.x[p, k]:.17g}",
                                f"{self.y[p, k]:.17g}", f"{self.z[p, k]:.17g}"])


def standard_normals(n_paths: int, n_steps: int, seed: int, stream: int = 0) -> np.ndarray:
    """Normals of shape (n_paths, n_steps).

    Row ``p`` is a function of (seed, stream, p, n_steps) only: each block of
    ``BLOCK_PATHS`` rows has its own Philox counter, so generating blocks in
    any order or in parallel gives identical output.
    """
    out = np.empty((n_paths, n_steps))
    key = np.array([seed % _U64, stream % _U64], dtype=np.uint64)
    for start in range(0, n_paths, BLOCK_PATHS):
        block = start // BLOCK_PATHS
        counter = np.array([0, 0, 0, block], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
        stop = min(start + BLOCK_PATHS, n_paths)
        out[start:stop] = gen.standard_normal((stop - start, n_steps))
    return out


def brownian_increments(cfg: SimConfig, T: float, stream: int = 0) -> np.ndarray:
    dt = T / cfg.n_steps
    if cfg.antithetic:
        half = standard_normals(cfg.n_paths // 2, cfg.n_steps, cfg.seed, stream)
        g = np.empty((cfg.n_paths, cfg.n_steps))
        g[0::2] = half
        g[1::2] = -half
    else:
        g = standard_normals(cfg.n_paths, cfg.n_steps, cfg.seed, stream)
    return math.sqrt(dt) * g


def coarsen(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (same Brownian path, coarser grid)."""
    n_paths, n_steps = dW.shape
    if n_steps % factor:
        raise ConfigurationError(f"{n_steps} steps do not coarsen by {factor}")
    return dW.reshape(n_paths, n_steps // factor, factor).sum(axis=2)


def _digest(dW: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(dW, dtype="<f8").tobytes()).hexdigest()


def _fail_nonfinite(arr, k):
    bad = np.flatnonzero(~np.isfinite(arr))
    p = int(bad[0])
    raise SimulationError(f"non-finite state on path {p} at step {k}", path=p, step=k)


def simulate(params: ModelParams, vol: VolatilityFn, x0: float, z0: float,
             cfg: SimConfig, dW: np.ndarray | None = None, stream: int = 0) -> PathSet:
    """Simulate X, Y, Z.

    The log scheme takes Euler-Maruyama noise steps in ln X and ln Z but
    integrates the drift of Z along its exact logistic flow, and advances Y
    by the exponential integrator with X log-linear inside the step.  With
    zero volatility every recursion is then exact, so Z = X / Y to rounding.

    ``dW`` overrides the seeded increments (shape ``(n_paths, n_steps)``),
    which lets convergence studies reuse one Brownian path across step sizes.
    """
    if not (x0 > 0.0 and z0 > 0.0 and math.isfinite(x0) and math.isfinite(z0)):
        raise ConfigurationError("x0 and z0 must be positive and finite")
    if dW is None:
        dW = brownian_increments(cfg, params.T, stream)
    else:
        dW = np.asarray(dW, dtype=float)
        if dW.shape != (cfg.n_paths, cfg.n_steps):
            raise ConfigurationError(f"dW has shape {dW.shape}, expected {(cfg.n_paths, cfg.n_steps)}")

    n_paths, n_steps = dW.shape
    T, r, lam = params.T, params.r, params.lam
    dt = T / n_steps
    decay = math.exp(-lam * dt)
    a = r + lam
    growth = math.exp(a * dt)

    x = np.empty((n_paths, n_steps + 1))
    y = np.empty_like(x)
    z = np.empty_like(x)
    x[:, 0] = x0
    z[:, 0] = z0
    y[:, 0] = x0 / z0

    log_scheme = cfg.scheme == LOG_EULER
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(n_steps):
            xk, zk = x[:, k], z[:, k]
            s = vol(zk)
            dw = dW[:, k]
            if log_scheme:
                shock = -0.5 * s * s * dt + s * dw
                x_new = xk * np.exp(r * dt + shock)
                # exact logistic flow of the drift, then the noise factor
                z_new = a * zk * growth / (a + lam * zk * (growth - 1.0)) * np.exp(shock)
                y_new = decay * y[:, k] + lam * dt * decay * xk * _expm1_ratio(
                    (lam + np.log(x_new / xk) / dt) * dt)
            else:
                x_new = xk * (1.0 + r * dt + s * dw)
                z_new = zk * (1.0 + (r + lam - lam * zk) * dt + s * dw)
                nonpos = (x_new <= 0.0) | (z_new <= 0.0)
                if nonpos.any():
                    p = int(np.flatnonzero(nonpos)[0])
                    raise PositivityError(
                        f"Euler scheme produced a non-positive state on path {p} at step {k + 1}; "
                        "use the log_euler scheme",
                        path=p, step=k + 1,
                    )
                y_new = decay * y[:, k] + (1.0 - decay) * 0.5 * (xk + x_new)
            for arr in (x_new, z_new, y_new):
                if not np.isfinite(arr).all():
                    _fail_nonfinite(arr, k + 1)
            x[:, k + 1] = x_new
            z[:, k + 1] = z_new
            y[:, k + 1] = y_new

    times = np.linspace(0.0, T, n_steps + 1)
    tol = _declared_tolerance(params, vol, z, dt)
    return PathSet(times, x, y, z, _digest(dW), tol)


def _expm1_ratio(c):
    """(e^c - 1) / c, continuous at 0."""
    small = np.abs(c) < 1e-8
    safe = np.where(small, 1.0, c)
    return np.where(small, 1.0 + 0.5 * c, np.expm1(safe) / safe)


def _declared_tolerance(params, vol, z, dt):
    # First-order bound on |Z - X/Y|: drift mismatch lam*|Z - X/Y| per unit time
    # plus the trapezoid term lam*sigma*Z*sqrt(dt)/2 per step.
    zmax = float(np.max(z))
    T, lam = params.T, params.lam
    c = lam * zmax * (1.0 + zmax) * (1.0 + vol.sigma_hi * math.sqrt(T)) * T
    return 10.0 * c * dt


def consistency_gap(ps: PathSet) -> float:
    """max over paths and nodes of |z - x/y|."""
    return float(np.max(np.abs(ps.z - ps.x / ps.y)))


def drift_sign_occupation(ps: PathSet, params: ModelParams, vol: VolatilityFn) -> dict:
    """Mean one-step change of ln Z from nodes above / below the reversion zone."""
    lo, hi = reversion_zone(params, vol)
    zk = ps.z[:, :-1]
    dlog = np.diff(np.log(ps.z), axis=1)
    above = zk > hi
    below = zk < lo
    return {
        "zone": (lo, hi),
        "n_above": int(above.sum()),
        "n_below": int(below.sum()),
        "mean_step_above": float(dlog[above].mean()) if above.any() else float("nan"),
        "mean_step_below": float(dlog[below].mean()) if below.any() else float("nan"),
    }
