import numpy as np
import pytest

from hybridres.ipm import IpmOptions
from hybridres.ocp import (
    CONTROL_NAMES, J_PER_MWH, NU, U, OcpConfig, PlantModel, PriceConfig, build_disturbances,
    generate_prices, hold_to_control_grid, objective, propagate, simulate_open_loop, solve_ocp, transcribe,
)
from hybridres.storage import BatteryParams, ThermalParams

MWH = J_PER_MWH
# every device except the battery switched off
BATTERY_ONLY = {name: 0.0 for name in ("P_t_in", "P_el", "I", "Q_t_out", "f_H2_out", "d_t", "d_H2")}


def flat(n, value):
    return np.full(n, float(value))


# -- disturbances and prices ---------------------------------------------------


@pytest.mark.parametrize("P_tot,d_el,P_sto,d_sto", [(4e6, 4e6, 0, 0), (6e6, 4e6, 2e6, 0), (1e6, 4e6, 0, 3e6)])
def test_build_disturbances(P_tot, d_el, P_sto, d_sto):
    d = build_disturbances([P_tot], [d_el], [0.0], [0.0], [0.0])
    assert d.P_sto[0] == P_sto and d.d_sto[0] == d_sto


def test_build_disturbances_rejects_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        build_disturbances([1.0, 2.0], [1.0], [0.0], [0.0], [0.0])


def test_disturbances_reject_simultaneous_surplus_and_deficit():
    from hybridres.ocp import DisturbanceTrajectory
    with pytest.raises(ValueError):
        DisturbanceTrajectory(*(np.zeros(1),) * 3, np.ones(1), np.ones(1))


def test_prices_zero_std_constant():
    cfg = PriceConfig(e_std=0.0, h_std=0.0, H2_std=0.0)
    p = generate_prices(cfg, 100, 600.0, seed=3)
    assert np.all(p["c_e"] == 50.0) and np.all(p["c_h"] == 20.0) and np.all(p["c_H2"] == 3.0)


def test_prices_seeded_and_held_hourly():
    a = generate_prices(PriceConfig(), 432, 600.0, seed=11)
    b = generate_prices(PriceConfig(), 432, 600.0, seed=11)
    for k in a:
        assert np.array_equal(a[k], b[k])
        assert np.all(a[k] >= 0)
        blocks = a[k].reshape(72, 6)
        assert np.all(blocks == blocks[:, :1])
    assert not np.array_equal(a["c_e"], generate_prices(PriceConfig(), 432, 600.0, seed=12)["c_e"])


def test_prices_clt_bound():
    p = generate_prices(PriceConfig(hold=600.0), 10_000, 600.0, seed=5)
    assert abs(p["c_e"].mean() - 50.0) < 3 * 10.0 / np.sqrt(10_000)


def test_hold_to_control_grid():
    out = hold_to_control_grid([1.0, 3.0, 5.0, 7.0], 2)
    assert np.array_equal(out, [2.0, 2.0, 6.0, 6.0])
    with pytest.raises(ValueError):
        hold_to_control_grid([1.0, 2.0, 3.0], 2)


# -- configuration and transcription -------------------------------------------


def test_config_grid_invariants():
    with pytest.raises(ValueError):
        OcpConfig(dt_control=900.0)
    with pytest.raises(ValueError):
        OcpConfig(tf=5000.0)
    with pytest.raises(ValueError):
        OcpConfig(u_max={"nope": 1.0})


def test_three_day_grid_counts():
    cfg = OcpConfig()
    assert (cfg.n_controls, cfg.n_samples) == (72, 432)


def test_zero_horizon_problem():
    cfg = OcpConfig(tf=0.0)
    d = build_disturbances([], [], [], [], [])
    tr = transcribe(PlantModel(), cfg, d, [9e9, 685.5, 0.0])
    nlp = tr.problem()
    assert nlp.n == 0 and nlp.m == 0
    assert tr.objective(nlp.x0) == 0.0


def test_infeasible_state_bounds_rejected():
    cfg = OcpConfig(tf=3600.0, x_min=(0.0, 900.0, 0.0), x_max=(1e10, 800.0, 1.0))
    d = build_disturbances(flat(6, 0), flat(6, 0), flat(6, 0), flat(6, 0), flat(6, 0))
    with pytest.raises(ValueError, match="infeasible"):
        transcribe(PlantModel(), cfg, d, [1e9, 850.0, 0.0])


def test_x0_outside_bounds_rejected():
    cfg = OcpConfig(tf=3600.0)
    d = build_disturbances(flat(6, 0), flat(6, 0), flat(6, 0), flat(6, 0), flat(6, 0))
    with pytest.raises(ValueError, match="x0"):
        transcribe(PlantModel(), cfg, d, [1e9, 100.0, 0.0])


def test_disturbance_must_be_held_per_interval():
    cfg = OcpConfig(tf=3600.0)
    P = np.array([1e6, 2e6, 1e6, 1e6, 1e6, 1e6])
    d = build_disturbances(P, flat(6, 0), flat(6, 0), flat(6, 0), flat(6, 0))
    with pytest.raises(ValueError, match="varies"):
        transcribe(PlantModel(), cfg, d, [1e9, 685.5, 0.0])


def test_hand_built_feasible_point_has_zero_residual():
    th = ThermalParams(T_min=200.0)
    model = PlantModel(battery=BatteryParams(alpha_b=0.0), thermal=th)
    cfg = OcpConfig(tf=2 * 3600.0)
    # balanced production: no surplus, no deficit
    d = build_disturbances(flat(12, 4e6), flat(12, 4e6), flat(12, 1e-8), flat(12, 1e-8), flat(12, 3.0))
    x0 = np.array([5e9, th.T_a, 0.0])
    tr = transcribe(model, cfg, d, x0)
    z = np.concatenate([np.zeros(tr.nu), np.tile(x0, tr.N)])
    assert np.max(np.abs(tr.constraints(z)), initial=0.0) < 1e-12


def test_jacobian_and_hessian_match_finite_differences():
    from hybridres.nlp import check_derivatives
    model = PlantModel(thermal=ThermalParams(cp1=0.3))
    cfg = OcpConfig(tf=2 * 3600.0)
    P = np.repeat([2e6, 0.0], 6)
    dl = np.repeat([0.0, 1e6], 6)
    d = build_disturbances(P, dl, flat(12, 50 / MWH), flat(12, 20 / MWH), flat(12, 3.0))
    tr = transcribe(model, cfg, d, [9e9, 685.5, 100.0])
    nlp = tr.problem()
    rng = np.random.default_rng(0)
    z = nlp.x0 + 0.05 * nlp.x_scale * rng.random(nlp.n)
    err = check_derivatives(nlp, x=z)
    assert err["gradient"] < 1e-6 and err["jacobian"] < 1e-6 and err["hessian"] < 1e-4


# -- objective ---------------------------------------------------------------


def test_objective_examples():
    cfg = OcpConfig(tf=3600.0, terminal_value=False)
    model = PlantModel()
    d = build_disturbances(flat(6, 0), flat(6, 0), flat(6, 50 / MWH), flat(6, 20 / MWH), flat(6, 3.0))
    u = np.zeros((6, NU))
    assert objective(u, [0, 0, 0], d, cfg, model) == 0.0
    u[:, U["P_b_out"]] = 1e6
    assert objective(u, [0, 0, 0], d, cfg, model) == pytest.approx(50.0, rel=1e-12)


def test_objective_linear_in_prices():
    cfg = OcpConfig(tf=3600.0)
    model = PlantModel()
    rng = np.random.default_rng(1)
    d = build_disturbances(flat(6, 0), flat(6, 1e6), 50 * rng.random(6) / MWH, 20 * rng.random(6) / MWH,
                          3 * rng.random(6))
    u = rng.random((6, NU)) * 1e5
    x_final = [4e9, 700.0, 200.0]
    assert objective(u, x_final, d.scaled_prices(2.0), cfg, model) == pytest.approx(
        2 * objective(u, x_final, d, cfg, model), rel=1e-12)


# -- solving -----------------------------------------------------------------


def test_surplus_routed_to_lossless_battery():
    model = PlantModel(battery=BatteryParams(eta_in=1.0))
    cfg = OcpConfig(tf=3600.0, u_max=BATTERY_ONLY)
    d = build_disturbances(flat(6, 5e6), flat(6, 4e6), flat(6, 50 / MWH), flat(6, 20 / MWH), flat(6, 3.0))
    sol = solve_ocp(model, cfg, d, [9e9, 685.5, 0.0])
    assert sol.nlp.success
    u = sol.controls[0]
    assert u[U["P_b_in"]] == pytest.approx(1e6, rel=1e-5)
    assert u[U["P_t_in"]] == 0.0 and u[U["P_el"]] == 0.0


def _two_interval_instance(price_factor=1.0):
    th = ThermalParams(T_min=200.0)
    model = PlantModel(battery=BatteryParams(alpha_b=0.0, E_max=20 * MWH), thermal=th)
    u_max = dict(BATTERY_ONLY, P_b_bo=0.0, P_b_out=5e6)
    cfg = OcpConfig(tf=2 * 3600.0, u_max=u_max, terminal_value=False)
    P = np.repeat([2e6, 0.0], 6)
    dl = np.repeat([0.0, 1e6], 6)
    c_e = np.repeat([40.0, 60.0], 6) * price_factor / MWH
    d = build_disturbances(P, dl, c_e, flat(12, 20 * price_factor / MWH), flat(12, 3.0 * price_factor))
    return model, cfg, d, np.array([1 * MWH, th.T_a, 0.0])


def _grid_oracle(model, d, E0, cfg):
    """Exhaustive search over (P_b_out0, P_b_out1, d_b1) with the closed-form battery balance."""
    eta_in, eta_out = model.battery.eta_in, model.battery.eta_out
    out0 = np.linspace(0, 5e6, 101)[:, None, None]
    out1 = np.linspace(0, 5e6, 201)[None, :, None]
    db1 = np.linspace(0, 1e6, 21)[None, None, :]
    h = 3600.0
    E1 = E0 + h * (eta_in * 2e6 - out0 / eta_out)
    E2 = E1 - h * (out1 + db1) / eta_out
    ok = (E1 >= 0) & (E2 >= 0) & (E1 <= 20 * MWH)
    c0, c1 = d.c_e[0], d.c_e[6]
    w = cfg.slack_weight_factor * max(c0, c1)
    profit = h * (c0 * out0 + c1 * out1 - w * (1e6 - db1))
    return float(np.where(ok, profit, -np.inf).max())


def test_two_interval_battery_only_matches_grid_search():
    model, cfg, d, x0 = _two_interval_instance()
    sol = solve_ocp(model, cfg, d, x0)
    assert sol.nlp.success
    best = _grid_oracle(model, d, x0[0], cfg)
    assert sol.profit == pytest.approx(best, rel=0.01)
    assert sol.profit >= best - 1e-6 * abs(best)


def test_conservation_residuals_at_solution():
    model, cfg, d, x0 = _two_interval_instance()
    sol = solve_ocp(model, cfg, d, x0)
    rep = simulate_open_loop(model, cfg, sol, d, x0)
    assert rep.dispatch_residual <= 1e-6
    assert rep.withdrawal_residual <= 1e-6
    assert rep.max_state_mismatch <= 1e-6
    assert np.all(rep.coverage_residual <= rep.slack + 1e-6 * np.maximum(1.0, d.d_sto))


def test_price_scaling_leaves_controls_unchanged():
    base = solve_ocp(*_two_interval_instance())
    scaled = solve_ocp(*_two_interval_instance(price_factor=3.0))
    assert np.allclose(base.controls, scaled.controls, rtol=1e-5, atol=1e-2)
    assert scaled.profit == pytest.approx(3 * base.profit, rel=1e-6)


def test_deficit_with_empty_storage_is_all_slack():
    # lossless thermal store parked at its lower bound holds no usable heat
    th = ThermalParams(UA=0.0)
    model = PlantModel(battery=BatteryParams(alpha_b=0.0), thermal=th)
    cfg = OcpConfig(tf=3600.0, u_max={"P_b_bo": 0.0}, terminal_value=False)
    d = build_disturbances(flat(6, 1e6), flat(6, 4e6), flat(6, 50 / MWH), flat(6, 20 / MWH), flat(6, 3.0))
    x0 = [0.0, th.T_min, 0.0]
    sol = solve_ocp(model, cfg, d, x0)
    assert sol.nlp.success
    rep = simulate_open_loop(model, cfg, sol, d, x0)
    assert np.allclose(rep.coverage_residual, 3e6, rtol=1e-5)
    assert np.allclose(rep.slack, 3e6, rtol=1e-5)


def test_optimum_beats_idle_controls():
    model = PlantModel()
    cfg = OcpConfig(tf=4 * 3600.0)
    P = np.repeat([6e6, 5e6, 2e6, 3e6], 6)
    rng = np.random.default_rng(3)
    c_e = np.repeat(rng.uniform(30, 70, 4), 6) / MWH
    d = build_disturbances(P, flat(24, 4e6), c_e, flat(24, 20 / MWH), flat(24, 3.0))
    x0 = np.array([9e9, 685.5, 0.0])
    sol = solve_ocp(model, cfg, d, x0)
    assert sol.nlp.success
    assert sol.nlp.kkt_residual <= 1e-5
    # feasible reference: surplus to the battery, deficit from the battery
    u = np.zeros((4, NU))
    u[:2, U["P_b_in"]] = [2e6, 1e6]
    u[2:, U["d_b"]] = [2e6, 1e6]
    x, _ = propagate(model, cfg, u, x0)
    ref = objective(np.repeat(u, 6, axis=0), x[-1], d, cfg, model)
    assert sol.profit >= ref - 1e-6 * abs(ref)
    assert sol.profit == pytest.approx(objective(sol.controls_per_sample(), sol.states[-1], d, cfg, model),
                                       rel=1e-6)


def test_solution_rows_and_determinism():
    model, cfg, d, x0 = _two_interval_instance()
    a = solve_ocp(model, cfg, d, x0, IpmOptions())
    b = solve_ocp(model, cfg, d, x0, IpmOptions())
    assert np.array_equal(a.controls, b.controls)
    rows = list(a.rows())
    assert len(rows) == 12 and len(rows[0]) == 16
    assert np.all(a.controls >= 0)
    assert set(CONTROL_NAMES) >= {"P_b_in", "s_d"}


def test_uncontrollable_state_leaving_bounds_rejected():
    # no thermal control can offset the losses of a store parked at T_min
    cfg = OcpConfig(tf=3600.0, u_max={"P_t_in": 0.0, "Q_t_out": 0.0, "d_t": 0.0})
    d = build_disturbances(flat(6, 5e6), flat(6, 4e6), flat(6, 50 / MWH), flat(6, 20 / MWH), flat(6, 3.0))
    model = PlantModel()
    with pytest.raises(ValueError, match="no control"):
        transcribe(model, cfg, d, [9e9, model.thermal.T_min, 0.0])


def test_determined_states_are_pinned():
    model, cfg, d, x0 = _two_interval_instance()
    tr = transcribe(model, cfg, d, x0)
    nlp = tr.problem()
    T_cols = tr.xi(np.arange(1, tr.N + 1), 1)
    assert np.all(nlp.x_lower[T_cols] == nlp.x_upper[T_cols])
    E_cols = tr.xi(np.arange(1, tr.N + 1), 0)
    assert np.all(nlp.x_lower[E_cols] < nlp.x_upper[E_cols])
