"""Run configuration, the verification registry and command execution."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import boundary as bnd
from . import kernels
from .bsm_baseline import BinomialConfig, crr_american_put, crr_boundary
from .errors import ConfigurationError, HRPricerError, failing_module
from .lsmc import LsmcConfig, price_american_put
from .model import (MarketState, ModelParams, VolatilityFn, drift_ln_z, model_to_dict,
                    parse_model, reversion_zone)
from .pde import GridSpec, solve, value_at
from .sde_sim import (SimConfig, brownian_increments, coarsen, consistency_gap,
                      drift_sign_occupation, simulate)

log = logging.getLogger(__name__)

COMMANDS = ("price", "boundary", "simulate", "verify")
METHODS = ("pde", "lsmc", "crr")

GRID_KEYS = {"n_cells", "n_t", "theta", "omega"}
LSMC_KEYS = {"n_paths", "n_steps", "basis_degree", "itm_only"}
SIM_KEYS = {"n_paths", "n_steps", "scheme", "antithetic"}
BOUNDARY_KEYS = {"n_paths", "n_steps", "noise_floor"}
SECTIONS = {"grid": GRID_KEYS, "lsmc": LSMC_KEYS, "sim": SIM_KEYS, "boundary": BOUNDARY_KEYS}
TOP_EXTRA = set(SECTIONS) | {"seed", "method", "sigma"}


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    vol: VolatilityFn
    state: MarketState
    method: str = "pde"
    sigma: str = "lo"                # crr volatility: "lo", "hi" or a number
    grid: dict = field(default_factory=lambda: {"n_cells": 128, "n_t": 256})
    lsmc: dict = field(default_factory=lambda: {"n_paths": 100_000, "n_steps": 50,
                                                "basis_degree": 3, "itm_only": True})
    sim: dict = field(default_factory=lambda: {"n_paths": 1000, "n_steps": 250})
    boundary: dict = field(default_factory=lambda: {"n_paths": 100, "n_steps": 50,
                                                    "noise_floor": 1e-4})
    out: Path = Path(".")
    seed: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        # validate eagerly so bad sections fail before any work
        self.grid_spec()
        self.lsmc_config()
        self.sim_config()
        self.sigma_value()

    def grid_spec(self) -> GridSpec:
        g = dict(self.grid)
        return GridSpec.for_model(self.params, self.vol, z0=self.state.z,
                                  n_cells=int(g.pop("n_cells", 128)),
                                  n_t=int(g.pop("n_t", 256)), **g)

    def lsmc_config(self) -> LsmcConfig:
        return LsmcConfig(seed=self.seed, **self.lsmc)

    def sim_config(self) -> SimConfig:
        return SimConfig(seed=self.seed, **self.sim)

    def sigma_value(self) -> float:
        if self.sigma == "lo":
            return self.vol.sigma_lo
        if self.sigma == "hi":
            return self.vol.sigma_hi
        try:
            val = float(self.sigma)
        except (TypeError, ValueError):
            raise ConfigurationError(f"sigma must be 'lo', 'hi' or a number, got {self.sigma!r}") from None
        if not (math.isfinite(val) and val > 0):
            raise ConfigurationError("explicit sigma must be positive")
        return val

    def to_dict(self) -> dict:
        doc = model_to_dict(self.params, self.vol, self.state)
        doc.update({"grid": dict(self.grid), "lsmc": dict(self.lsmc), "sim": dict(self.sim),
                    "boundary": dict(self.boundary), "seed": self.seed,
                    "method": self.method, "sigma": self.sigma})
        return doc

    def input_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_config(doc: Any, command: str, *, out=".", seed=None, method=None,
                 sigma=None) -> RunConfig:
    """Build a RunConfig from a parsed JSON document; CLI overrides win."""
    if not isinstance(doc, dict) or not doc:
        raise ConfigurationError("config must be a non-empty JSON object")
    params, vol, state = parse_model(doc, extra_keys=TOP_EXTRA)
    kw: dict = {}
    for name, allowed in SECTIONS.items():
        if name in doc:
            sec = doc[name]
            if not isinstance(sec, dict):
                raise ConfigurationError(f"'{name}' must be an object")
            unknown = set(sec) - allowed
            if unknown:
                raise ConfigurationError(f"unknown keys in '{name}': {sorted(unknown)}")
            base = getattr(RunConfig, "__dataclass_fields__")[name].default_factory()
            base.update(sec)
            kw[name] = base
    try:
        return RunConfig(
            command=command, params=params, vol=vol, state=state,
            method=method or doc.get("method", "pde"),
            sigma=sigma if sigma is not None else str(doc.get("sigma", "lo")),
            out=Path(out),
            seed=seed if seed is not None else doc.get("seed", 0),
            **kw,
        )
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


# --- verification ------------------------------------------------------------

@dataclass(frozen=True)
class CheckDescriptor:
    check_id: str
    paper_claim: str
    func: Callable


_REGISTRY: dict[str, CheckDescriptor] = {}


def _check(check_id, claim):
    def deco(fn):
        _REGISTRY[check_id] = CheckDescriptor(check_id, claim, fn)
        return fn
    return deco


def check_registry() -> list[CheckDescriptor]:
    return list(_REGISTRY.values())


class Context:
    """Lazily computed artefacts shared between checks."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._cache: dict = {}

    def get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def control_vol(self) -> VolatilityFn:
        return VolatilityFn.constant(self.cfg.vol.sigma_lo)

    def surface(self):
        return self.get("surface", lambda: solve(self.cfg.params, self.cfg.vol, self.cfg.grid_spec()))

    def refined_surface(self):
        def make():
            g = self.cfg.grid_spec()
            n = int(self.cfg.grid.get("n_cells", 128))
            fine = GridSpec.for_model(self.cfg.params, self.cfg.vol, z0=self.cfg.state.z,
                                      n_cells=2 * n, n_t=2 * g.n_t, theta=g.theta, omega=g.omega)
            return solve(self.cfg.params, self.cfg.vol, fine)
        return self.get("refined", make)

    def control_surface(self):
        def make():
            g = GridSpec.for_model(self.cfg.params, self.control_vol, z0=self.cfg.state.z,
                                   n_cells=int(self.cfg.grid.get("n_cells", 128)),
                                   n_t=int(self.cfg.grid.get("n_t", 256)))
            return solve(self.cfg.params, self.control_vol, g)
        return self.get("control", make)

    def boundary(self):
        return self.get("boundary", lambda: bnd.extract(self.surface()))

    def control_boundary(self):
        return self.get("control_boundary", lambda: bnd.extract(self.control_surface()))

    def crr(self, sigma):
        return self.get(("crr", sigma), lambda: crr_american_put(
            sigma, self.cfg.params, self.cfg.state.x, BinomialConfig(5000)))

    def crr_curve(self, sigma):
        return self.get(("crr_b", sigma), lambda: crr_boundary(
            sigma, self.cfg.params, BinomialConfig(5000), n_times=1001))

    def lsmc(self):
        return self.get("lsmc", lambda: price_american_put(
            self.cfg.params, self.cfg.vol, self.cfg.state.x, self.cfg.state.z,
            self.cfg.lsmc_config()))


def audit_vol_bounds(vol: VolatilityFn, n: int = 2001) -> dict:
    """Sample sigma on a log grid over [1e-3, 1e3] and compare with the stored bounds."""
    z = np.logspace(-3.0, 3.0, n)
    s = vol(z)
    return {"sampled_min": float(s.min()), "sampled_max": float(s.max()),
            "sigma_lo": vol.sigma_lo, "sigma_hi": vol.sigma_hi,
            "within_bounds": bool(s.min() >= vol.sigma_lo and s.max() <= vol.sigma_hi)}


def _pde_column(surface, x0):
    return np.array([value_at(surface, 0.0, x0, z) for z in surface.z_nodes])


@_check("L31_envelope", "price lies between the constant-volatility American puts at inf and sup volatility")
def _l31(ctx: Context):
    cfg = ctx.cfg
    K = cfg.params.K
    lo = ctx.crr(cfg.vol.sigma_lo)
    hi = ctx.crr(cfg.vol.sigma_hi)
    est = ctx.lsmc()
    col = _pde_column(ctx.surface(), cfg.state.x)
    tol = max(3 * est.std_error, 0.005 * K)
    ok = bool(np.all(col >= lo - tol) and np.all(col <= hi + tol)
              and lo - tol <= est.price <= hi + tol)
    return ok, {"crr_sigma_lo": lo, "crr_sigma_hi": hi, "pde_min_over_z": float(col.min()),
                "pde_max_over_z": float(col.max()), "lsmc_price": est.price,
                "lsmc_std_error": est.std_error}, {"tol": tol}


@_check("L32_bounds", "intrinsic value <= price <= strike")
def _l32b(ctx: Context):
    K = ctx.cfg.params.K
    S = ctx.surface()
    x = np.exp(S.grid.u)
    gap = S.values - np.maximum(K - x, 0.0)[None, None, :]
    min_gap = float(gap.min())
    max_v = float(S.values.max())
    est = ctx.lsmc()
    intrinsic = max(K - ctx.cfg.state.x, 0.0)
    ok = (min_gap >= -1e-10 * K and max_v <= K + 1e-10 * K
          and intrinsic - 3 * est.std_error <= est.price <= K)
    return ok, {"min_value_minus_payoff": min_gap, "max_value": max_v, "lsmc_price": est.price}, \
        {"obstacle": -1e-10 * K, "cap": K + 1e-10 * K}


def _second_chord(vals, x):
    hl = x[1:-1] - x[:-2]
    hr = x[2:] - x[1:-1]
    return (vals[..., :-2] * hr + vals[..., 2:] * hl) / (hl + hr) - vals[..., 1:-1]


@_check("L32_convexity", "x -> V(x, z) is convex at every z")
def _l32c(ctx: Context):
    K = ctx.cfg.params.K
    S = ctx.surface()
    x = S.x_nodes
    worst = min(float(_second_chord(S.values_xz(s), x).min()) for s in range(len(S.times)))
    return worst >= -1e-6 * K, {"min_second_difference": worst}, {"floor": -1e-6 * K}


@_check("L32_monotone", "x -> V(x, z) is non-increasing at every z")
def _l32m(ctx: Context):
    K = ctx.cfg.params.K
    S = ctx.surface()
    worst = max(float(np.diff(S.values_xz(s), axis=1).max()) for s in range(len(S.times)))
    return worst <= 1e-8 * K, {"max_first_difference": worst}, {"ceiling": 1e-8 * K}


@_check("P33_boundary_exists", "a continuous exercise boundary b(z) exists inside the constant-volatility envelope")
def _p33e(ctx: Context):
    B = ctx.boundary()
    Bf = bnd.extract(ctx.refined_surface())
    c_desk, c_fine = B.jump_constant(), Bf.jump_constant()
    cfg = ctx.cfg
    b_hi_vol = ctx.crr_curve(cfg.vol.sigma_hi)
    b_lo_vol = ctx.crr_curve(cfg.vol.sigma_lo)
    viol = bnd.envelope_violation(B, b_hi_vol, b_lo_vol, grid_tol=B.cell)
    # an absolute floor keeps round-off level constants (flat boundaries) comparable
    floor = 1e-3 * cfg.params.K
    ok = bool(np.isfinite(B.b).all() and c_fine <= 2.0 * c_desk + floor and viol == 0.0)
    return ok, {"jump_constant": c_desk, "jump_constant_refined": c_fine,
                "envelope_excess": viol, "n_columns": int(B.b.size)}, \
        {"refined_over_desk_max": 2.0, "jump_floor": floor, "envelope_grid_tol": B.cell}


@_check("P33_partition", "stopping region is exactly {x <= b(z)}")
def _p33p(ctx: Context):
    S = ctx.surface()
    B = ctx.boundary()
    x = S.x_nodes
    below_K = x <= S.params.K
    bad = 0
    for s in range(len(S.times)):
        ex = S.exercise_mask(s, B.tolerance)[:, below_K]
        xb = x[below_K][None, :]
        b = B.b[s][:, None]
        bad += int(np.sum(ex & (xb > b + B.cell)))
        bad += int(np.sum(~ex & (xb < b - B.cell)))
    return bad == 0, {"violating_nodes": bad}, {"grid_tol": B.cell}


@_check("P34_endpoint", "the striking curve ends at (T, K)")
def _p34e(ctx: Context):
    B = ctx.boundary()
    K = ctx.cfg.params.K
    err = float(np.max(np.abs(B.b[-1] - K)))
    return err <= B.cell, {"max_abs_b_T_minus_K": err}, {"one_cell": B.cell}


def _count_nonmonotone(ctx, boundary, vol, tag):
    cfg = ctx.cfg
    bc = cfg.boundary
    sim = SimConfig(n_paths=int(bc["n_paths"]), n_steps=int(bc["n_steps"]), seed=cfg.seed)
    ps = simulate(cfg.params, vol, cfg.state.x, cfg.state.z, sim, stream=7)
    floor = float(bc["noise_floor"]) * cfg.params.K
    reports = []
    for p in range(ps.n_paths):
        curve = bnd.striking_curve_along(boundary, ps.times, ps.z[p], p)
        reports.append(bnd.monotonicity_report(curve, noise_floor=floor))
    n_bad = sum(not r["is_monotone_increasing"] for r in reports)
    worst = max(r["max_decrease"] for r in reports)
    return n_bad, worst, ps


@_check("P34_nonmonotone", "with increasing volatility the time-parametrised striking curve is not monotone increasing")
def _p34n(ctx: Context):
    vol = ctx.cfg.vol
    n_model, worst_model, _ = _count_nonmonotone(ctx, ctx.boundary(), vol, "model")
    n_ctrl, worst_ctrl, _ = _count_nonmonotone(ctx, ctx.control_boundary(), ctx.control_vol, "control")
    expect_skew = not vol.is_constant
    ok = n_ctrl == 0 and ((n_model >= 1) if expect_skew else (n_model == 0))
    return ok, {"nonmonotone_paths_model": n_model, "max_decrease_model": worst_model,
                "nonmonotone_paths_control": n_ctrl, "max_decrease_control": worst_ctrl,
                "model_volatility_varies": expect_skew}, \
        {"noise_floor": float(ctx.cfg.boundary["noise_floor"]) * ctx.cfg.params.K}


@_check("Z_meanreversion_zone", "ln Z drifts back towards the reversion zone from either side")
def _zmr(ctx: Context):
    cfg = ctx.cfg
    lo, hi = reversion_zone(cfg.params, cfg.vol)
    rng = np.random.default_rng([cfg.seed, 11])
    above = hi * (1.0 + rng.uniform(1e-6, 10.0, 1000))
    below = lo * rng.uniform(1e-6, 1.0 - 1e-6, 1000)
    wrong_above = sum(drift_ln_z(cfg.params, cfg.vol, z) >= 0 for z in above)
    wrong_below = sum(drift_ln_z(cfg.params, cfg.vol, z) <= 0 for z in below)
    ps = simulate(cfg.params, cfg.vol, cfg.state.x, cfg.state.z,
                  SimConfig(n_paths=2000, n_steps=250, seed=cfg.seed), stream=3)
    occ = drift_sign_occupation(ps, cfg.params, cfg.vol)
    occ_ok = True
    if occ["n_above"]:
        occ_ok &= occ["mean_step_above"] < 0
    if occ["n_below"]:
        occ_ok &= occ["mean_step_below"] > 0
    ok = wrong_above == 0 and wrong_below == 0 and occ_ok
    return ok, {"wrong_sign_above": int(wrong_above), "wrong_sign_below": int(wrong_below),
                "zone": [lo, hi], "mean_step_above": occ["mean_step_above"],
                "mean_step_below": occ["mean_step_below"]}, {"sign_errors": 0}


def consistency_study(params, vol, x0, z0, seed, n_paths=1000, steps=(250, 500, 1000)):
    """Gap |Z - X/Y| for one Brownian path sampled at several step counts."""
    finest = max(steps)
    dW = brownian_increments(SimConfig(n_paths=n_paths, n_steps=finest, seed=seed), params.T, stream=5)
    gaps = []
    for n in steps:
        inc = coarsen(dW, finest // n) if n != finest else dW
        ps = simulate(params, vol, x0, z0, SimConfig(n_paths=n_paths, n_steps=n, seed=seed), dW=inc)
        gaps.append(consistency_gap(ps))
    return gaps


@_check("Y_Z_consistency", "Z simulated by its own equation agrees with X / Y to first order in dt")
def _yz(ctx: Context):
    cfg = ctx.cfg
    steps = (250, 500, 1000)
    gaps = consistency_study(cfg.params, cfg.vol, cfg.state.x, cfg.state.z, cfg.seed, steps=steps)
    dts = [cfg.params.T / n for n in steps]
    c1 = gaps[0] / dts[0]
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    ok = gaps[-1] <= 5 * c1 * dts[-1] and all(1.5 <= q <= 2.5 for q in ratios)
    return ok, {"gaps": gaps, "first_order_constant": c1, "halving_ratios": ratios}, \
        {"ratio_range": [1.5, 2.5], "gap_bound": 5 * c1 * dts[-1]}


@_check("CONST_sigma_reduction", "with constant volatility the model reduces to the Black-Scholes American put")
def _const(ctx: Context):
    K = ctx.cfg.params.K
    sigma = ctx.control_vol.sigma_lo
    ref = ctx.crr(sigma)
    col = _pde_column(ctx.control_surface(), ctx.cfg.state.x)
    err = float(np.max(np.abs(col - ref)))
    spread = float(np.ptp(col))
    ok = err <= 0.005 * K and spread <= 0.0025 * K
    return ok, {"sigma": sigma, "crr": ref, "max_abs_error": err, "z_spread": spread}, \
        {"error": 0.005 * K, "z_spread": 0.0025 * K}


@_check("MARTINGALE_discounted_X", "the discounted asset price is a martingale")
def _mart(ctx: Context):
    cfg = ctx.cfg
    ps = simulate(cfg.params, cfg.vol, cfg.state.x, cfg.state.z,
                  SimConfig(n_paths=100_000, n_steps=100, seed=cfg.seed), stream=9)
    d = math.exp(-cfg.params.r * cfg.params.T) * ps.x[:, -1]
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    return abs(mean - cfg.state.x) <= 3 * se, {"mean": mean, "std_error": se}, {"n_se": 3}


def verify(cfg: RunConfig) -> dict:
    ctx = Context(cfg)
    results = []
    for desc in check_registry():
        t0 = time.perf_counter()
        rec = {"check_id": desc.check_id, "paper_claim": desc.paper_claim,
               "input_hash": cfg.input_hash()}
        try:
            ok, measured, tol = desc.func(ctx)
            rec.update(status="pass" if ok else "fail", measured=measured, tolerances=tol)
        except HRPricerError as exc:
            rec.update(status="error", measured={}, tolerances={},
                       error=f"{type(exc).__name__} in {failing_module(exc)}: {exc}")
        rec["runtime"] = time.perf_counter() - t0
        log.info("%-24s %s (%.1fs)", desc.check_id, rec["status"], rec["runtime"])
        results.append(rec)
    return {"config": cfg.to_dict(), "input_hash": cfg.input_hash(),
            "backend": kernels.BACKEND, "vol_bounds_audit": audit_vol_bounds(cfg.vol),
            "checks": results}


# --- commands ----------------------------------------------------------------

def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def price_record(cfg: RunConfig) -> dict:
    p, st = cfg.params, cfg.state
    if cfg.method == "lsmc":
        est = price_american_put(p, cfg.vol, st.x, st.z, cfg.lsmc_config())
        rec = est.to_dict()
    elif cfg.method == "pde":
        surface = solve(p, cfg.vol, cfg.grid_spec())
        rec = {"price": value_at(surface, 0.0, st.x, st.z), "std_error": None,
               "n_paths": None, "flags": [], "grid": surface.stats}
    else:
        sigma = cfg.sigma_value()
        rec = {"price": crr_american_put(sigma, p, st.x, BinomialConfig(5000)),
               "std_error": None, "n_paths": None, "flags": [], "sigma": sigma}
    rec.update(method=cfg.method, x0=st.x, z0=st.z)
    return rec


def ode_z_path(params: ModelParams, z0: float, times) -> np.ndarray:
    """Noise-free flow dz = (r + lam - lam z) z dt (logistic)."""
    a = params.r + params.lam
    t = np.asarray(times, dtype=float)
    return a / (params.lam + (a / z0 - params.lam) * np.exp(-a * t))


def run_boundary(cfg: RunConfig) -> dict:
    out = cfg.out
    surface = solve(cfg.params, cfg.vol, cfg.grid_spec())
    B = bnd.extract(surface)
    B.to_csv(out / "boundary.csv")
    bc = cfg.boundary
    sim = SimConfig(n_paths=int(bc["n_paths"]), n_steps=int(bc["n_steps"]), seed=cfg.seed)
    ps = simulate(cfg.params, cfg.vol, cfg.state.x, cfg.state.z, sim, stream=7)
    floor = float(bc["noise_floor"]) * cfg.params.K
    curves_dir = out / "striking_curves"
    curves_dir.mkdir(exist_ok=True)
    reports = []
    for p in range(ps.n_paths):
        c = bnd.striking_curve_along(B, ps.times, ps.z[p], p)
        c.to_csv(curves_dir / f"path_{p:04d}.csv")
        reports.append(dict(bnd.monotonicity_report(c, noise_floor=floor), path_id=p))
    ode = bnd.striking_curve_along(B, ps.times, ode_z_path(cfg.params, cfg.state.z, ps.times))
    ode.to_csv(curves_dir / "ode.csv")
    ode_rep = bnd.monotonicity_report(ode, noise_floor=floor)
    for label in ("lo", "hi"):
        sigma = cfg.vol.sigma_lo if label == "lo" else cfg.vol.sigma_hi
        crr_boundary(sigma, cfg.params).to_csv(out / f"baseline_{label}.csv")
    summary = {
        "n_paths": ps.n_paths,
        "nonmonotone_paths": sum(not r["is_monotone_increasing"] for r in reports),
        "noise_floor": floor,
        "jump_constant": B.jump_constant(),
        "ode_path": ode_rep,
        "paths": reports,
    }
    _write_json(out / "monotonicity.json", summary)
    return summary


def run(cfg: RunConfig) -> int:
    """Execute a command; returns the process exit status (0 ok, 1 failed checks)."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "price":
        _write_json(out / "price.json", price_record(cfg))
        return 0
    if cfg.command == "boundary":
        run_boundary(cfg)
        return 0
    if cfg.command == "simulate":
        ps = simulate(cfg.params, cfg.vol, cfg.state.x, cfg.state.z, cfg.sim_config())
        ps.to_csv(out / "paths.csv")
        return 0
    report = verify(cfg)
    _write_json(out / "report.json", report)
    statuses = {c["status"] for c in report["checks"]}
    if "error" in statuses:
        return 3
    return 0 if statuses == {"pass"} else 1
