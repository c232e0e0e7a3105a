"""Desk-scale acceptance run: one PASS/FAIL line per numbered criterion.

Run with ``pytest tests/test_acceptance.py`` (lines are printed even
without ``-s``).
"""

import json
from pathlib import Path

import numpy as np
import pytest

from hrpricer import BinomialConfig, GridSpec, crr_american_put, solve, value_at
from hrpricer.harness import Context, check_registry, parse_config

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parents[1]
DESK_DOC = json.loads((ROOT / "configs" / "hr_smile.json").read_text())
K = DESK_DOC["K"]


@pytest.fixture(scope="module")
def ctx():
    return Context(parse_config(DESK_DOC, "verify"))


@pytest.fixture(scope="module")
def results(ctx):
    out = {}
    for desc in check_registry():
        ok, measured, tol = desc.func(ctx)
        out[desc.check_id] = (bool(ok), measured, tol)
    return out


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number:>2}] {name:<40} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"
    return emit


def test_01_price_envelope(results, report):
    ok, m, t = results["L31_envelope"]
    tol = max(3 * m["lsmc_std_error"], 0.005 * K)
    inside = (m["pde_min_over_z"] >= m["crr_sigma_lo"] - tol
              and m["pde_max_over_z"] <= m["crr_sigma_hi"] + tol
              and m["crr_sigma_lo"] - tol <= m["lsmc_price"] <= m["crr_sigma_hi"] + tol)
    report(1, "L31_envelope", ok and inside,
           f"PDE [{m['pde_min_over_z']:.4f}, {m['pde_max_over_z']:.4f}], LSMC {m['lsmc_price']:.4f}"
           f" in [{m['crr_sigma_lo']:.4f}, {m['crr_sigma_hi']:.4f}] +/- {tol:.3f}")


def test_02_bounds(results, report):
    ok, m, _ = results["L32_bounds"]
    good = m["min_value_minus_payoff"] >= -1e-10 * K and m["max_value"] <= K * (1 + 1e-10)
    report(2, "L32_bounds", ok and good,
           f"min(V - payoff) = {m['min_value_minus_payoff']:.3g}, max V = {m['max_value']:.4f}")


def test_03_convex_and_monotone(results, report):
    ok_c, mc, _ = results["L32_convexity"]
    ok_m, mm, _ = results["L32_monotone"]
    good = mc["min_second_difference"] >= -1e-6 * K and mm["max_first_difference"] <= 1e-8 * K
    report(3, "L32_convexity / L32_monotone", ok_c and ok_m and good,
           f"min 2nd diff {mc['min_second_difference']:.3g}, max 1st diff {mm['max_first_difference']:.3g}")


def test_04_boundary_exists_and_partition(results, report):
    ok_e, me, _ = results["P33_boundary_exists"]
    ok_p, mp, _ = results["P33_partition"]
    good = mp["violating_nodes"] == 0 and me["envelope_excess"] == 0.0
    report(4, "P33_boundary_exists / P33_partition", ok_e and ok_p and good,
           f"{me['n_columns']} columns, C = {me['jump_constant']:.2f} (refined "
           f"{me['jump_constant_refined']:.2f}), partition violations {mp['violating_nodes']}")


def test_05_endpoint(results, ctx, report):
    ok, m, t = results["P34_endpoint"]
    good = m["max_abs_b_T_minus_K"] <= ctx.boundary().cell
    report(5, "P34_endpoint", ok and good,
           f"max |b(T, z) - K| = {m['max_abs_b_T_minus_K']:.3g} (cell {t['one_cell']:.3f})")


def test_06_nonmonotone_striking_curve(results, report):
    ok, m, _ = results["P34_nonmonotone"]
    good = m["nonmonotone_paths_model"] >= 1 and m["nonmonotone_paths_control"] == 0
    report(6, "P34_nonmonotone", ok and good,
           f"{m['nonmonotone_paths_model']}/100 smile paths decrease (max drop "
           f"{m['max_decrease_model']:.3f}); control {m['nonmonotone_paths_control']}/100")


def test_07_mean_reversion_zone(results, report):
    ok, m, _ = results["Z_meanreversion_zone"]
    good = m["wrong_sign_above"] == 0 and m["wrong_sign_below"] == 0
    report(7, "Z_meanreversion_zone", ok and good,
           f"sign errors {m['wrong_sign_above']}+{m['wrong_sign_below']}, mean ln Z step "
           f"above {m['mean_step_above']:.2e}, below {m['mean_step_below']:.2e}")


def test_08_y_z_consistency(results, report):
    ok, m, t = results["Y_Z_consistency"]
    good = all(1.5 <= q <= 2.5 for q in m["halving_ratios"]) and m["gaps"][-1] <= t["gap_bound"]
    report(8, "Y_Z_consistency", ok and good,
           f"gaps {['%.3g' % g for g in m['gaps']]}, ratios {['%.3f' % q for q in m['halving_ratios']]}")


def test_09_constant_volatility_reduction(results, report):
    ok, m, _ = results["CONST_sigma_reduction"]
    good = m["max_abs_error"] <= 0.005 * K and m["z_spread"] <= 0.0025 * K
    report(9, "CONST_sigma_reduction", ok and good,
           f"|PDE - CRR| <= {m['max_abs_error']:.4f}, z-spread {m['z_spread']:.3g}")


def test_10_discounted_martingale(results, report):
    ok, m, _ = results["MARTINGALE_discounted_X"]
    good = abs(m["mean"] - DESK_DOC["x0"]) <= 3 * m["std_error"]
    report(10, "MARTINGALE_discounted_X", ok and good,
           f"mean {m['mean']:.4f} vs {DESK_DOC['x0']} (3 se = {3 * m['std_error']:.4f})")


def test_11_oracle_convergence(ctx, report):
    cfg = ctx.cfg
    prices = [crr_american_put(0.2, cfg.params, cfg.state.x, BinomialConfig(n))
              for n in (500, 1000, 2000, 4000, 8000)]
    tree_d = np.abs(np.diff(prices))
    tree_ok = bool(np.all(np.diff(tree_d) < 0))
    coarse = GridSpec.for_model(cfg.params, cfg.vol, z0=cfg.state.z, n_cells=64, n_t=128)
    surfaces = [solve(cfg.params, cfg.vol, coarse), ctx.surface(), ctx.refined_surface()]
    pde = [value_at(s, 0.0, cfg.state.x, cfg.state.z) for s in surfaces]
    pde_d = np.abs(np.diff(pde))
    pde_ok = bool(np.all(np.diff(pde_d) < 0))
    report(11, "oracle convergence", tree_ok and pde_ok,
           f"tree deltas {['%.2e' % d for d in tree_d]}; PDE {['%.5f' % v for v in pde]} "
           f"deltas {['%.2e' % d for d in pde_d]}")
