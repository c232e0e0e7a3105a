import csv
import math

import numpy as np
import pytest

from hrpricer import (BinomialConfig, ConfigurationError, ExtrapolationError, GridSpec,
                      LsmcConfig, ModelParams, SolverError, ValueSurface, VolatilityFn,
                      crr_american_put, drift_ln_z, generator_coefficients, price_american_put,
                      solve, value_at)
from oracles import AMERICAN_PUT_SIGMA_02, AMERICAN_PUT_SIGMA_04

P = ModelParams(r=0.05, lam=1.0, K=100.0, T=1.0)


def test_generator_coefficients_examples(smile):
    a_w, a_v, d_vv, r = generator_coefficients(P, smile, 0.0)
    assert a_w == 0.0 and r == 0.05
    flat = VolatilityFn.constant(0.2)
    a_w, a_v, d_vv, _ = generator_coefficients(P, flat, math.log(2.0))
    assert a_w == pytest.approx(1.0)
    assert a_v == pytest.approx(-0.97)
    assert a_v == pytest.approx(drift_ln_z(P, flat, 2.0))
    v = np.linspace(-1, 1, 9)
    assert np.allclose(generator_coefficients(P, flat, v)[2], 0.02, rtol=1e-15, atol=0)


def test_terminal_slice_is_payoff(smile_surface):
    x = smile_surface.x_nodes
    assert np.array_equal(smile_surface.values[-1],
                          np.broadcast_to(np.maximum(100.0 - x, 0.0), smile_surface.values[-1].shape))
    assert smile_surface.times[-1] == pytest.approx(1.0)
    assert smile_surface.times[0] == 0.0


def test_obstacle_and_cap(smile_surface):
    x = smile_surface.x_nodes
    gap = smile_surface.values - np.maximum(100.0 - x, 0.0)
    assert gap.min() >= -1e-10 * P.K
    assert smile_surface.values.max() <= P.K * (1 + 1e-10)


def test_convex_and_decreasing_in_x(smile_surface):
    S = smile_surface
    x = S.x_nodes
    hl, hr = x[1:-1] - x[:-2], x[2:] - x[1:-1]
    for s in range(0, len(S.times), 8):
        vals = S.values_xz(s)
        chord = (vals[:, :-2] * hr + vals[:, 2:] * hl) / (hl + hr) - vals[:, 1:-1]
        assert chord.min() >= -1e-6 * P.K
        assert np.diff(vals, axis=1).max() <= 1e-8 * P.K


def test_envelope_at_time_zero(smile_surface):
    col = np.array([value_at(smile_surface, 0.0, 100.0, z) for z in smile_surface.z_nodes])
    tol = 0.005 * P.K
    assert np.all(col >= AMERICAN_PUT_SIGMA_02 - tol)
    assert np.all(col <= AMERICAN_PUT_SIGMA_04 + tol)
    # value rises with z because the smile raises volatility
    assert np.all(np.diff(col) >= -1e-9)


def test_far_out_of_the_money_is_worthless(smile_surface):
    g = smile_surface.grid
    x_far = math.exp(g.u_max)
    for z in (0.8, 1.0, 1.2):
        assert value_at(smile_surface, 0.0, x_far, z) <= 0.01 * P.K


def test_constant_volatility_reduces_to_tree(flat_surface):
    col = np.array([value_at(flat_surface, 0.0, 100.0, z) for z in flat_surface.z_nodes])
    tree = crr_american_put(0.2, P, 100.0, BinomialConfig(5000))
    assert np.max(np.abs(col - tree)) <= 0.005 * P.K
    assert np.ptp(col) <= 0.0025 * P.K


def test_value_at_node_and_expiry(smile_surface):
    S = smile_surface
    g = S.grid
    i, j = 40, 70
    x = math.exp(g.u[i])
    z = math.exp(g.u[i] - g.w[j])
    assert value_at(S, S.times[3], x, z) == S.values[3, j, i]
    assert value_at(S, 1.0, 90.0, 1.0) == pytest.approx(10.0, abs=1e-12)
    assert value_at(S, 1.0, 120.0, 1.0) == 0.0


def test_value_at_midpoint_of_linear_surface(smile_surface):
    g = smile_surface.grid
    jj, ii = np.meshgrid(np.arange(g.n_w), np.arange(g.n_u), indexing="ij")
    lin = 3.0 + 0.25 * ii - 0.5 * jj
    S = ValueSurface(P, smile_surface.vol, g, np.array([0.0, 1.0]), np.stack([lin, lin]))
    i, j = 30, 50
    u = g.u[i] + 0.5 * g.h
    w = g.w[j] + 0.5 * g.h
    expected = 0.5 * (lin[j, i] + lin[j + 1, i + 1])
    assert value_at(S, 0.25, math.exp(u), math.exp(u - w)) == pytest.approx(expected, abs=1e-12)


def test_value_at_refuses_to_extrapolate(smile_surface):
    g = smile_surface.grid
    with pytest.raises(ExtrapolationError):
        value_at(smile_surface, 0.0, math.exp(g.u_max + 0.1), 1.0)
    with pytest.raises(ExtrapolationError):
        value_at(smile_surface, 0.0, 100.0, 1e6)
    with pytest.raises(ExtrapolationError):
        value_at(smile_surface, 1.5, 100.0, 1.0)


def test_explicit_stepping_checks_stability(smile):
    g = GridSpec.for_model(P, smile, n_cells=128, n_t=16, theta=0.0)
    with pytest.raises(ConfigurationError, match="theta"):
        solve(P, smile, g)


def test_psor_iteration_cap_reports_residual(smile):
    g = GridSpec.for_model(P, smile, n_cells=64, n_t=16, max_iter=1)
    with pytest.raises(SolverError) as info:
        solve(P, smile, g)
    assert info.value.residual > 1e-9 * P.K


def test_grid_validation(smile):
    with pytest.raises(ConfigurationError):
        GridSpec.for_model(P, smile, n_cells=127)
    with pytest.raises(ConfigurationError):
        GridSpec(u_min=1.0, u_max=0.0, n_u=65, v_min=-1.0, v_max=1.0)
    with pytest.raises(ConfigurationError):
        GridSpec(u_min=0.0, u_max=1.0, n_u=65, v_min=-1.0, v_max=1.0, omega=2.0)
    with pytest.raises(ConfigurationError):
        GridSpec(u_min=0.0, u_max=1.0, n_u=65, v_min=-1.0, v_max=1.0 + 1e-3)


def test_grid_places_strike_and_unit_ratio_on_nodes(smile):
    g = GridSpec.for_model(P, smile)
    assert np.min(np.abs(g.u - math.log(100.0))) < 1e-12
    assert np.min(np.abs(g.v)) < 1e-12
    lo, hi = 0.97, 1.03
    assert g.v[0] < math.log(lo) and g.v[-1] > math.log(hi)


def test_crank_nicolson_agrees_with_implicit(smile, smile_surface):
    g = GridSpec.for_model(P, smile, n_cells=128, n_t=256, theta=0.5)
    cn = solve(P, smile, g, keep_every=256)
    assert len(cn.times) == 2
    for z in (0.9, 1.0, 1.1):
        assert value_at(cn, 0.0, 100.0, z) == pytest.approx(value_at(smile_surface, 0.0, 100.0, z), abs=0.02)


def test_refinement_deltas_shrink(smile):
    vals = []
    for n in (32, 64, 128):
        g = GridSpec.for_model(P, smile, n_cells=n, n_t=2 * n)
        vals.append(value_at(solve(P, smile, g, keep_every=4 * n), 0.0, 100.0, 1.0))
    d = np.abs(np.diff(vals))
    assert d[1] < d[0]


@pytest.mark.slow
@pytest.mark.parametrize("x0", [90.0, 100.0, 110.0])
@pytest.mark.parametrize("z0", [0.9, 1.0, 1.1])
def test_agrees_with_monte_carlo(smile_surface, smile, x0, z0):
    est = price_american_put(P, smile, x0, z0, LsmcConfig(n_paths=100_000, n_steps=50, seed=31))
    pde = value_at(smile_surface, 0.0, x0, z0)
    assert abs(pde - est.price) <= max(3 * est.std_error, 0.01 * P.K)


def test_stats_and_csv(tmp_path, smile):
    g = GridSpec.for_model(P, smile, n_cells=32, n_t=16)
    S = solve(P, smile, g, keep_every=8)
    assert S.stats["max_psor_residual"] <= 1e-9 * P.K
    assert S.stats["max_psor_iterations"] <= g.iteration_cap
    S.to_csv(tmp_path / "s.csv", every=2)
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["t", "x", "z", "value", "exercised"]
    assert len(rows) - 1 == 2 * g.n_v * g.n_u
