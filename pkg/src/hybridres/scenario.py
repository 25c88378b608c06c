"""End-to-end scenario: weather, production, dispatch optimisation, reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ocp
from .config import ScenarioConfig
from .hydrogen import (
    ELECTROLYZER_CURVE_HEADER, TANK_TRACE_HEADER, TankState, electrolyzer_curve_rows, max_current,
    tank_pressure,
)
from .solar import simulate_irradiance
from .storage import STORAGE_TRACE_HEADER
from .turbine import POWER_CURVE_HEADER, PowerCurve, default_cp_surface, load_cp_csv, power_curve, power_curve_rows
from .weather import RandomStream, simulate_weather

log = logging.getLogger(__name__)

WEATHER_HEADER = ("t_s", "v_m", "v_t", "v", "kappa", "okta")
IRRADIANCE_HEADER = ("t_s", "h_rad", "I_N", "I_D", "I_G", "P_s")
PRODUCTION_HEADER = ("t_s", "P_wind_W", "P_pv_W", "P_tot_W", "P_tot_held_W", "d_el_W",
                     "P_sto_W", "d_sto_W", "c_e_per_MWh", "c_h_per_MWh", "c_H2_per_kg")
SOLVER_LOG_HEADER = ("iteration", "objective", "primal_inf", "dual_inf", "compl", "mu", "alpha")


class StageError(RuntimeError):
    """A failure tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    # repr round-trips IEEE doubles exactly
    return repr(float(value))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path.name}: row has {len(row)} fields, header has {len(header)}")
            w.writerow([_fmt(v) for v in row])
    return path


def _columns_rows(columns: dict, header):
    return zip(*(columns[k] for k in header))


def cp_surface_for(cfg: ScenarioConfig):
    return load_cp_csv(cfg.run.cp_table) if cfg.run.cp_table else default_cp_surface()


# -- standalone curve exports ----------------------------------------------------


def run_weather(cfg: ScenarioConfig):
    r = cfg.run
    weather = simulate_weather(cfg.wind, cfg.cloud, r.v_m0, r.kappa0, r.horizon, cfg.ocp.dt_sample,
                               _seeds(r.seed)["weather"], substeps=r.wind_substeps)
    return weather


def write_weather(cfg: ScenarioConfig, out_dir) -> Path:
    with _Stage("weather"):
        weather = run_weather(cfg)
        return write_csv(Path(out_dir) / "weather.csv", WEATHER_HEADER, _columns_rows(weather.columns(), WEATHER_HEADER))


def write_power_curve(cfg: ScenarioConfig, out_dir, v_max: float = 27.0, step: float = 0.1) -> Path:
    with _Stage("power-curve"):
        v = np.round(np.arange(0.0, v_max + 0.5 * step, step), 10)
        points = power_curve(cfg.turbine, cp_surface_for(cfg), v)
        return write_csv(Path(out_dir) / "power_curve.csv", POWER_CURVE_HEADER, power_curve_rows(points))


def write_electrolyzer_curve(cfg: ScenarioConfig, out_dir, n: int = 201) -> Path:
    with _Stage("electrolyzer-curve"):
        el = cfg.electrolyzer
        currents = np.linspace(0.0, max_current(el), n)
        return write_csv(Path(out_dir) / "electrolyzer_curve.csv", ELECTROLYZER_CURVE_HEADER,
                         electrolyzer_curve_rows(el, currents))


# -- full scenario ---------------------------------------------------------------


def _seeds(seed: int) -> dict:
    """Independent per-stage seeds derived from the scenario seed."""
    weather, irradiance, prices = RandomStream(seed).spawn(3)
    return {"weather": weather.seed, "irradiance": irradiance.seed, "prices": prices.seed}


@dataclass
class RunReport:
    seed: int
    profit: float
    solver_status: str
    solver_iterations: int
    kkt_residual: float
    constraint_violation: float
    #: energies in MWh, hydrogen in kg
    electricity_sold_MWh: float
    electricity_bought_MWh: float
    heat_sold_MWh: float
    hydrogen_sold_kg: float
    surplus_MWh: float
    deficit_MWh: float
    deficit_covered_MWh: float
    unserved_MWh: float
    max_coverage_excess: float
    deficit_samples: int
    samples_with_slack: int
    max_state_bound_violation: float
    max_state_mismatch: float
    simultaneous_charge_discharge: int
    files: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@dataclass
class ScenarioResult:
    report: RunReport
    weather: object
    irradiance: object
    disturbances: ocp.DisturbanceTrajectory
    solution: ocp.OcpSolution
    open_loop: ocp.OpenLoopReport
    P_tot: np.ndarray


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> ScenarioResult:
    """Weather, production, disturbances, OCP, open-loop check and file output.

    Errors are re-raised as :class:`StageError` naming the failing stage.
    """
    r = cfg.run
    seeds = _seeds(r.seed)
    ocfg = cfg.ocp_config()
    plant = cfg.plant()
    out = Path(r.out_dir)
    N = ocfg.n_samples
    dt = ocfg.dt_sample

    with _Stage("weather"):
        weather = simulate_weather(cfg.wind, cfg.cloud, r.v_m0, r.kappa0, r.horizon, dt,
                                   seeds["weather"], substeps=r.wind_substeps)
    with _Stage("irradiance"):
        irr = simulate_irradiance(cfg.site, cfg.radiation, cfg.pv, weather.t_s, weather.okta,
                                  RandomStream(seeds["irradiance"]), t_start=r.t_start)
    with _Stage("production"):
        v = weather.v if r.include_turbulence else np.maximum(weather.v_m, 0.0)
        curve = PowerCurve(cfg.turbine, cp_surface_for(cfg))
        # each sample interval uses the state at its start
        P_wind = r.n_turbines * curve(v[:N])
        P_pv = irr.P_s[:N]
        P_tot = P_wind + P_pv
        P_held = ocp.hold_to_control_grid(P_tot, ocfg.samples_per_control)
        d_el = np.full(N, r.demand)
    with _Stage("prices"):
        prices = ocp.generate_prices(cfg.prices, N, dt, seeds["prices"])
        d = ocp.build_disturbances(P_held, d_el, **ocp.prices_to_si(prices))
    x0 = (cfg.initial.E_b, cfg.initial.T, cfg.initial.n_H2)
    with _Stage("ocp"):
        sol = ocp.solve_ocp(plant, ocfg, d, x0, options=cfg.solver)
        if not sol.nlp.success:
            raise RuntimeError(f"solver stopped with status {sol.nlp.status}: {sol.nlp.message}")
    with _Stage("open-loop"):
        ol = ocp.simulate_open_loop(plant, ocfg, sol, d, x0)

    u = sol.controls_per_sample()
    U = ocp.U
    to_mwh = dt / ocp.J_PER_MWH
    d_fc = plant.fuel_cell.watts_per_mol_s * u[:, U["d_H2"]] if N else np.zeros(0)
    covered = u[:, U["d_b"]] + u[:, U["d_t"]] + d_fc
    deficit = d.d_sto > 0
    report = RunReport(
        seed=r.seed,
        profit=float(sol.profit),
        solver_status=sol.nlp.status,
        solver_iterations=int(sol.nlp.iterations),
        kkt_residual=float(sol.nlp.kkt_residual),
        constraint_violation=float(sol.nlp.constraint_violation),
        electricity_sold_MWh=float(np.sum(u[:, U["P_b_out"]]) * to_mwh),
        electricity_bought_MWh=float(np.sum(u[:, U["P_b_bo"]]) * to_mwh),
        heat_sold_MWh=float(np.sum(u[:, U["Q_t_out"]]) * to_mwh),
        hydrogen_sold_kg=float(np.sum(u[:, U["f_H2_out"]]) * dt * plant.fuel_cell.MM_H2),
        surplus_MWh=float(np.sum(d.P_sto) * to_mwh),
        deficit_MWh=float(np.sum(d.d_sto) * to_mwh),
        deficit_covered_MWh=float(np.sum(np.minimum(covered, d.d_sto)) * to_mwh),
        unserved_MWh=float(np.sum(ol.slack) * to_mwh),
        max_coverage_excess=float(np.max(ol.coverage_residual - ol.slack, initial=0.0)),
        deficit_samples=int(np.sum(deficit)),
        samples_with_slack=int(np.sum(ol.slack > 1e-3 * np.maximum(1.0, d.d_sto))),
        max_state_bound_violation=ol.max_bound_violation,
        max_state_mismatch=ol.max_state_mismatch,
        simultaneous_charge_discharge=ol.simultaneous_charge_discharge,
    )
    result = ScenarioResult(report, weather, irr, d, sol, ol, P_tot)
    if write:
        with _Stage("output"):
            report.files = _write_outputs(out, result, P_wind, P_pv, P_held, d_el, prices, cfg)
            write_report(out / "report.json", report)
    return result


def write_report(path, report: RunReport) -> None:
    files = list(report.files) + [Path(path).name]
    data = report.to_dict() | {"files": files}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    report.files = files


def _write_outputs(out: Path, res: ScenarioResult, P_wind, P_pv, P_held, d_el, prices, cfg) -> list:
    d, sol, ol = res.disturbances, res.solution, res.open_loop
    N = len(d)
    t = res.weather.t_s[:N]
    paths = [
        write_csv(out / "weather.csv", WEATHER_HEADER, _columns_rows(res.weather.columns(), WEATHER_HEADER)),
        write_csv(out / "irradiance.csv", IRRADIANCE_HEADER, _columns_rows(res.irradiance.columns(), IRRADIANCE_HEADER)),
        write_csv(out / "production.csv", PRODUCTION_HEADER,
                  zip(t, P_wind, P_pv, res.P_tot, P_held, d_el, d.P_sto, d.d_sto,
                      prices["c_e"], prices["c_h"], prices["c_H2"])),
        write_csv(out / "solution.csv", ocp.SOLUTION_HEADER, sol.rows()),
    ]
    sat = np.vstack([np.zeros((1, 3), dtype=bool), ol.saturation])
    paths.append(write_csv(out / "storage.csv", STORAGE_TRACE_HEADER,
                           zip(sol.t_s, ol.states[:, 0], ol.states[:, 1], sat[:, 0], sat[:, 1])))
    tank_rows = []
    for ti, n in zip(sol.t_s, ol.states[:, 2]):
        state = TankState(n=max(n, 0.0), V=cfg.tank.V, T_tank=cfg.tank.T_tank)
        tank_rows.append((ti, n, tank_pressure(state, cfg.gas) if state.n > 0 else 0.0))
    paths.append(write_csv(out / "tank.csv", TANK_TRACE_HEADER, tank_rows))
    paths.append(write_csv(out / "solver_log.csv", SOLVER_LOG_HEADER,
                           ([h[k] for k in SOLVER_LOG_HEADER] for h in sol.nlp.log)))
    return [p.name for p in paths]
