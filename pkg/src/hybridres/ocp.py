"""Economic optimal control of the storage plant.

The continuous problem maximises market revenue from electricity, heat and
hydrogen subject to the storage dynamics, the surplus dispatch and deficit
withdrawal balances, the electrolyser U-I relation and box bounds. It is
transcribed with zero-order-hold controls on the control grid and explicit
Euler defect constraints on the (finer) sample grid, and solved with the
interior-point method in :mod:`hybridres.ipm`.

Control vector per control interval (index order matters)::

    P_b_in P_t_in P_el P_b_out P_b_bo Q_t_out f_H2_out I d_b d_t d_H2 s_d

State vector per sample: ``E_b`` (J), ``T`` (K), ``n_H2`` (mol).

Price units: ``c_e`` and ``c_h`` are currency per J, ``c_H2`` is currency
per kg (the molar mass turns the mol/s outflow into kg/s).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import hydrogen as h2
from .hydrogen import ElectrolyzerParams, FuelCellParams
from .ipm import IpmOptions, solve as ipm_solve
from .nlp import NlpProblem, NlpSolution
from .storage import BatteryParams, ThermalParams, step_battery, step_thermal

J_PER_MWH = 3.6e9

CONTROL_NAMES = (
    "P_b_in", "P_t_in", "P_el", "P_b_out", "P_b_bo", "Q_t_out",
    "f_H2_out", "I", "d_b", "d_t", "d_H2", "s_d",
)
STATE_NAMES = ("E_b", "T", "n_H2")
NU = len(CONTROL_NAMES)
NX = len(STATE_NAMES)
U = {name: i for i, name in enumerate(CONTROL_NAMES)}

SOLUTION_HEADER = (
    "t_s", "E_b", "T", "n_H2", "P_b_in", "P_t_in", "P_el", "P_b_out", "P_b_bo",
    "Q_t_out", "f_H2_out", "I", "d_b", "d_t", "d_fc", "s_d",
)

# solver-facing magnitudes
_U_SCALE = np.array([1e6, 1e6, 1e6, 1e6, 1e6, 1e6, 1.0, 1e3, 1e6, 1e6, 1.0, 1e6])
_X_SCALE = np.array([J_PER_MWH, 100.0, 1e4])
# controls entering each state's balance
_STATE_INPUTS = (
    ("P_b_in", "P_b_bo", "P_b_out", "d_b"),
    ("P_t_in", "Q_t_out", "d_t"),
    ("I", "f_H2_out", "d_H2"),
)


@dataclass(frozen=True)
class PlantModel:
    battery: BatteryParams = BatteryParams()
    thermal: ThermalParams = ThermalParams()
    electrolyzer: ElectrolyzerParams = ElectrolyzerParams()
    fuel_cell: FuelCellParams = FuelCellParams()
    eta_steam: float = 0.4
    #: tank capacity, mol
    n_max: float = 1000.0 / h2.MM_H2

    def __post_init__(self):
        if not 0 < self.eta_steam <= 1:
            raise ValueError("eta_steam must lie in (0, 1]")
        if not self.n_max > 0:
            raise ValueError("tank capacity must be positive")


@dataclass(frozen=True)
class OcpConfig:
    """Horizon, grids and bounds.

    ``u_max`` maps control names to upper bounds (all lower bounds are 0);
    entries missing from it default to ``default_u_max`` (W) or, for the
    hydrogen flows, ``default_flow_max`` (mol/s). ``P_el`` and ``I``
    are capped by the electrolyser rating and ``P_b_bo`` by ``import_limit``.
    """

    t0: float = 0.0
    tf: float = 3 * 86400.0
    dt_sample: float = 600.0
    dt_control: float = 3600.0
    x_min: Optional[tuple] = None
    x_max: Optional[tuple] = None
    u_max: dict = field(default_factory=dict)
    default_u_max: float = 10e6
    #: default cap on the hydrogen flows f_H2_out and d_H2, mol/s
    default_flow_max: float = 60.0
    import_limit: float = 2e6
    slack_weight_factor: float = 10.0
    terminal_value: bool = True

    def __post_init__(self):
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        ratio = self.dt_control / self.dt_sample
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_control must be an integer multiple of dt_sample")
        span = (self.tf - self.t0) / self.dt_control
        if span < 0 or abs(span - round(span)) > 1e-9:
            raise ValueError("tf - t0 must be a non-negative multiple of dt_control")
        unknown = set(self.u_max) - set(CONTROL_NAMES)
        if unknown:
            raise ValueError(f"unknown controls in u_max: {sorted(unknown)}")

    @property
    def samples_per_control(self) -> int:
        return int(round(self.dt_control / self.dt_sample))

    @property
    def n_controls(self) -> int:
        return int(round((self.tf - self.t0) / self.dt_control))

    @property
    def n_samples(self) -> int:
        return self.n_controls * self.samples_per_control

    def state_bounds(self, model: PlantModel):
        lo = np.array(self.x_min if self.x_min is not None
                      else (model.battery.E_min, model.thermal.T_min, 0.0), dtype=float)
        hi = np.array(self.x_max if self.x_max is not None
                      else (model.battery.E_max, model.thermal.T_max, model.n_max), dtype=float)
        if np.any(lo > hi):
            raise ValueError(f"infeasible state bounds: x_min={lo} > x_max={hi}")
        return lo, hi

    def control_bounds(self, model: PlantModel):
        hi = np.array([self.u_max.get(name, self.default_u_max) for name in CONTROL_NAMES], dtype=float)
        for name in ("f_H2_out", "d_H2"):
            hi[U[name]] = self.u_max.get(name, self.default_flow_max)
        el = model.electrolyzer
        hi[U["P_el"]] = min(hi[U["P_el"]], el.P_rated)
        hi[U["I"]] = min(self.u_max.get("I", np.inf), h2.max_current(el))
        hi[U["P_b_bo"]] = min(hi[U["P_b_bo"]], self.import_limit)
        if "s_d" not in self.u_max:
            hi[U["s_d"]] = np.inf
        if np.any(hi < 0):
            raise ValueError("control upper bounds must be non-negative")
        return np.zeros(NU), hi


@dataclass
class DisturbanceTrajectory:
    """Per-sample prices (SI) and surplus/deficit powers (W)."""

    c_e: np.ndarray
    c_h: np.ndarray
    c_H2: np.ndarray
    P_sto: np.ndarray
    d_sto: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float) for k in ("c_e", "c_h", "c_H2", "P_sto", "d_sto")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("disturbance arrays must be 1-D and of equal length")
        self.c_e, self.c_h, self.c_H2, self.P_sto, self.d_sto = arrays
        if np.any(self.P_sto < 0) or np.any(self.d_sto < 0):
            raise ValueError("P_sto and d_sto must be non-negative")
        if np.any((self.P_sto > 0) & (self.d_sto > 0)):
            raise ValueError("surplus and deficit cannot both be positive in one sample")

    def __len__(self):
        return len(self.P_sto)

    def scaled_prices(self, factor: float) -> "DisturbanceTrajectory":
        return replace(self, c_e=self.c_e * factor, c_h=self.c_h * factor, c_H2=self.c_H2 * factor)


def build_disturbances(P_tot, d_el, c_e, c_h, c_H2) -> DisturbanceTrajectory:
    """Split production against demand into storable surplus and deficit.

    ``c_e``/``c_h`` are currency per J and ``c_H2`` currency per kg.
    """
    P_tot = np.asarray(P_tot, dtype=float)
    d_el = np.asarray(d_el, dtype=float)
    lengths = {len(np.atleast_1d(a)) for a in (P_tot, d_el, c_e, c_h, c_H2)}
    if len(lengths) != 1:
        raise ValueError(f"length mismatch among production, demand and prices: {sorted(lengths)}")
    net = P_tot - d_el
    return DisturbanceTrajectory(
        c_e=np.asarray(c_e, dtype=float),
        c_h=np.asarray(c_h, dtype=float),
        c_H2=np.asarray(c_H2, dtype=float),
        P_sto=np.maximum(net, 0.0),
        d_sto=np.maximum(-net, 0.0),
    )


def hold_to_control_grid(values, samples_per_control: int):
    """Replace each block of samples by its mean (zero-order hold on the control grid)."""
    values = np.asarray(values, dtype=float)
    if len(values) % samples_per_control:
        raise ValueError("series length is not a multiple of the control interval")
    blocks = values.reshape(-1, samples_per_control)
    return np.repeat(blocks.mean(axis=1), samples_per_control)


@dataclass(frozen=True)
class PriceConfig:
    """Normal price distributions; electricity and heat in currency/MWh,
    hydrogen in currency/kg."""

    e_mean: float = 50.0
    e_std: float = 10.0
    h_mean: float = 20.0
    h_std: float = 5.0
    H2_mean: float = 3.0
    H2_std: float = 0.5
    hold: float = 3600.0


def generate_prices(cfg: PriceConfig, n_samples: int, dt_sample: float, seed: int):
    """Per-sample price series in the config's units.

    One Gaussian draw per ``cfg.hold`` seconds, floored at 0 and repeated over
    the samples it covers.
    """
    per_block = cfg.hold / dt_sample
    if per_block < 1 or abs(per_block - round(per_block)) > 1e-9:
        raise ValueError("price hold time must be a multiple of the sample time")
    per_block = int(round(per_block))
    n_blocks = -(-n_samples // per_block)
    rng = np.random.Generator(np.random.PCG64(seed))
    out = {}
    for key, mean, std in (("c_e", cfg.e_mean, cfg.e_std), ("c_h", cfg.h_mean, cfg.h_std),
                           ("c_H2", cfg.H2_mean, cfg.H2_std)):
        draws = np.maximum(mean + std * rng.standard_normal(n_blocks), 0.0)
        out[key] = np.repeat(draws, per_block)[:n_samples]
    return out


def prices_to_si(prices):
    """Convert {c_e, c_h} from currency/MWh to currency/J; c_H2 stays per kg."""
    return {"c_e": prices["c_e"] / J_PER_MWH, "c_h": prices["c_h"] / J_PER_MWH, "c_H2": prices["c_H2"]}


# -- objective ----------------------------------------------------------------


def slack_weight(d: DisturbanceTrajectory, cfg: OcpConfig) -> float:
    """Penalty per J of unserved demand."""
    peak = float(np.max(d.c_e)) if len(d) else 0.0
    return cfg.slack_weight_factor * max(peak, 1.0 / J_PER_MWH)


def terminal_value(x_final, d: DisturbanceTrajectory, model: PlantModel) -> float:
    """Leftover stored energy valued as electricity at the mean price."""
    if not len(d):
        return 0.0
    E_b, T, n = x_final
    price = float(np.mean(d.c_e))
    th = model.thermal
    electric = (
        model.battery.eta_out * E_b
        + model.eta_steam * th.heat_content(th.T_min, T)
        + model.fuel_cell.watts_per_mol_s * n
    )
    return price * electric


def objective(controls, x_final, d: DisturbanceTrajectory, cfg: OcpConfig, model: PlantModel) -> float:
    """Profit of a per-sample control trajectory (rectangle rule).

    ``controls`` is an (n_samples, 12) array in ``CONTROL_NAMES`` order.
    """
    u = np.asarray(controls, dtype=float).reshape(len(d), NU)
    dt = cfg.dt_sample
    revenue = dt * np.sum(
        d.c_e * (u[:, U["P_b_out"]] - u[:, U["P_b_bo"]])
        + d.c_h * u[:, U["Q_t_out"]]
        + model.fuel_cell.MM_H2 * d.c_H2 * u[:, U["f_H2_out"]]
    )
    penalty = slack_weight(d, cfg) * dt * np.sum(u[:, U["s_d"]]) if len(d) else 0.0
    tv = terminal_value(x_final, d, model) if cfg.terminal_value else 0.0
    return float(revenue - penalty + tv)


# -- transcription ------------------------------------------------------------


class Transcription:
    """Multiple-shooting style NLP for one horizon.

    Decision vector: controls for every control interval, then states for
    samples 1..N (the initial state is a parameter). Constraint rows: three
    Euler defects per sample, then dispatch, withdrawal and electrolyser
    consistency per control interval. Since controls and disturbances are
    both held over a control interval, the per-sample dispatch and withdrawal
    balances coincide with the per-interval rows.
    """

    def __init__(self, model: PlantModel, cfg: OcpConfig, d: DisturbanceTrajectory, x0):
        self.model, self.cfg, self.d = model, cfg, d
        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.shape != (NX,):
            raise ValueError("x0 must hold (E_b, T, n_H2)")
        self.K = cfg.n_controls
        self.S = cfg.samples_per_control
        self.N = cfg.n_samples
        if len(d) != self.N:
            raise ValueError(f"disturbances have {len(d)} samples, horizon needs {self.N}")
        self.x_lo, self.x_hi = cfg.state_bounds(model)
        if np.any(self.x0 < self.x_lo - 1e-9 * np.abs(self.x_lo)) or np.any(self.x0 > self.x_hi + 1e-9 * np.abs(self.x_hi)):
            raise ValueError(f"x0={self.x0} lies outside the state bounds")
        self.u_lo, self.u_hi = cfg.control_bounds(model)
        if self.K:
            for name, arr in (("P_sto", d.P_sto), ("d_sto", d.d_sto)):
                blocks = arr.reshape(self.K, self.S)
                if np.any(np.abs(blocks - blocks[:, :1]) > 1e-9 * np.maximum(1.0, np.abs(blocks[:, :1]))):
                    raise ValueError(f"{name} varies within a control interval; hold it on the control grid first")
        self.P_sto_k = d.P_sto[:: self.S].copy() if self.K else np.zeros(0)
        self.d_sto_k = d.d_sto[:: self.S].copy() if self.K else np.zeros(0)

        self.nu = NU * self.K
        self.n = self.nu + NX * self.N
        self.m_full = NX * self.N + 3 * self.K
        # rows whose variables are all pinned at zero are dropped, and those
        # variables are fixed, so the constraint gradients stay independent
        surplus = self.P_sto_k > 0
        deficit = self.d_sto_k > 0
        self.keep = np.ones(self.m_full, dtype=bool)
        if self.K:
            self.keep[NX * self.N::3] = surplus
            self.keep[NX * self.N + 1::3] = deficit
            self.keep[NX * self.N + 2::3] = surplus
        self.m = int(self.keep.sum())
        u_hi = np.tile(self.u_hi, (self.K, 1))
        for name in ("P_b_in", "P_t_in", "P_el", "I"):
            u_hi[~surplus, U[name]] = 0.0
        for name in ("d_b", "d_t", "d_H2", "s_d"):
            u_hi[~deficit, U[name]] = 0.0
        self.u_hi_k = u_hi
        dt = cfg.dt_sample
        k_of_j = np.arange(self.N) // self.S if self.N else np.zeros(0, dtype=int)
        self.k_of_j = k_of_j
        self._pin_determined_states()
        # per-interval price weights (rectangle rule)
        def agg(a):
            return dt * a.reshape(self.K, self.S).sum(axis=1) if self.K else np.zeros(0)

        self.w_sell = agg(d.c_e)
        self.w_heat = agg(d.c_h)
        self.w_h2 = model.fuel_cell.MM_H2 * agg(d.c_H2)
        self.w_slack = slack_weight(d, cfg) * cfg.dt_control if self.K else 0.0
        self.tv_price = float(np.mean(d.c_e)) if (cfg.terminal_value and self.N) else 0.0
        self._build_pattern()

    def _pin_determined_states(self):
        """Fix states whose trajectory no free control can influence.

        Such a state follows from x0 alone; leaving it free makes its Euler
        rows redundant with the pinned controls and, when it sits on a bound
        (an empty tank with electrolysis switched off), leaves the interior
        point method without a strictly feasible interior.
        """
        self.xs_lo = np.tile(self.x_lo, (self.N, 1))
        self.xs_hi = np.tile(self.x_hi, (self.N, 1))
        if not self.N:
            return
        fixed = self.u_hi_k <= self.u_lo
        determined = np.ones(NX, dtype=bool)
        free_run = np.zeros((self.N, NX), dtype=bool)
        for j in range(self.N):
            k = self.k_of_j[j]
            for s, names in enumerate(_STATE_INPUTS):
                determined[s] &= all(fixed[k, U[n]] for n in names)
            free_run[j] = ~determined
        pinned = ~free_run
        if not pinned.any():
            return
        x = propagate(self.model, self.cfg, np.zeros((self.K, NU)), self.x0)[0][1:]
        tol = 1e-9 * np.maximum(1.0, np.abs(np.vstack([self.x_lo, self.x_hi])))
        out = pinned & ((x < self.x_lo - tol[0]) | (x > self.x_hi + tol[1]))
        if out.any():
            j, s = np.argwhere(out)[0]
            raise ValueError(
                f"{STATE_NAMES[s]} leaves its bounds at sample {j + 1} and no control can prevent it"
            )
        x = np.clip(x, self.x_lo, self.x_hi)
        self.xs_lo[pinned] = x[pinned]
        self.xs_hi[pinned] = x[pinned]
        self.keep[: NX * self.N] &= free_run.ravel()
        self.m = int(self.keep.sum())

    # index helpers
    def ui(self, k, name):
        return NU * np.asarray(k) + U[name]

    def xi(self, j, s):
        """Column of state ``s`` at sample j >= 1."""
        return self.nu + NX * (np.asarray(j) - 1) + s

    def split(self, z):
        u = z[: self.nu].reshape(self.K, NU)
        x = np.vstack([self.x0, z[self.nu:].reshape(self.N, NX)])
        return u, x

    def _build_pattern(self):
        N, K, dt = self.N, self.K, self.cfg.dt_sample
        bat, th, m = self.model.battery, self.model.thermal, self.model
        j = np.arange(N)
        k = self.k_of_j
        jj = j[j >= 1]
        rows, cols, const = [], [], []
        # entries whose value does not depend on z; None marks a value filled per evaluation
        def add(r, c, v):
            r = np.atleast_1d(r)
            rows.append(r)
            cols.append(np.broadcast_to(np.atleast_1d(c), r.shape))
            const.append(np.broadcast_to(np.atleast_1d(np.nan if v is None else v), r.shape).astype(float))

        rb, rt, rh = NX * j, NX * j + 1, NX * j + 2
        # battery
        add(rb, self.xi(j + 1, 0), 1.0)
        add(NX * jj, self.xi(jj, 0), -1.0 + dt * bat.alpha_b)
        add(rb, self.ui(k, "P_b_in"), -dt * bat.eta_in)
        add(rb, self.ui(k, "P_b_bo"), -dt * bat.eta_in)
        add(rb, self.ui(k, "P_b_out"), dt / bat.eta_out)
        add(rb, self.ui(k, "d_b"), dt / bat.eta_out)
        # thermal, multiplied through by m*cp(T_j)
        self._slot_T_next = sum(len(r) for r in rows)
        add(rt, self.xi(j + 1, 1), None)
        self._slot_T_curr = sum(len(r) for r in rows)
        add(NX * jj + 1, self.xi(jj, 1), None)
        add(rt, self.ui(k, "P_t_in"), -dt * th.eta_in)
        add(rt, self.ui(k, "Q_t_out"), dt)
        add(rt, self.ui(k, "d_t"), dt / m.eta_steam)
        # tank
        add(rh, self.xi(j + 1, 2), 1.0)
        add(NX * jj + 2, self.xi(jj, 2), -1.0)
        self._slot_tank_I = sum(len(r) for r in rows)
        add(rh, self.ui(k, "I"), None)
        add(rh, self.ui(k, "f_H2_out"), dt)
        add(rh, self.ui(k, "d_H2"), dt)
        # per-interval rows
        kk = np.arange(K)
        r0 = NX * N + 3 * kk
        for name in ("P_b_in", "P_t_in", "P_el"):
            add(r0, self.ui(kk, name), 1.0)
        for name in ("d_b", "d_t", "s_d"):
            add(r0 + 1, self.ui(kk, name), 1.0)
        add(r0 + 1, self.ui(kk, "d_H2"), m.fuel_cell.watts_per_mol_s)
        add(r0 + 2, self.ui(kk, "P_el"), 1.0)
        self._slot_el_I = sum(len(r) for r in rows)
        add(r0 + 2, self.ui(kk, "I"), None)

        self._rows = np.concatenate(rows).astype(int) if rows else np.zeros(0, int)
        self._cols = np.concatenate(cols).astype(int) if cols else np.zeros(0, int)
        self._vals = np.concatenate(const) if const else np.zeros(0)
        self._jj = jj

    # -- callbacks --------------------------------------------------------------

    def _electrolyzer(self, I):
        el = self.model.electrolyzer
        I = np.maximum(I, 0.0)
        P = np.array([h2.stack_power_derivatives(float(i), el) for i in I]).reshape(-1, 3)
        f = np.array([h2.hydrogen_rate_derivatives(float(i), el) for i in I]).reshape(-1, 3)
        return P, f

    def constraints(self, z):
        u, x = self.split(z)
        N, dt = self.N, self.cfg.dt_sample
        bat, th, m = self.model.battery, self.model.thermal, self.model
        c = np.empty(self.m_full)
        if N:
            uj = u[self.k_of_j]
            E, T, n = x[:, 0], x[:, 1], x[:, 2]
            P, f = self._electrolyzer(u[:, U["I"]])
            c[0: NX * N: NX] = E[1:] - E[:-1] - dt * (
                -bat.alpha_b * E[:-1]
                + bat.eta_in * (uj[:, U["P_b_in"]] + uj[:, U["P_b_bo"]])
                - (uj[:, U["P_b_out"]] + uj[:, U["d_b"]]) / bat.eta_out
            )
            c[1: NX * N: NX] = th.m * th.cp(T[:-1]) * (T[1:] - T[:-1]) - dt * (
                th.eta_in * uj[:, U["P_t_in"]]
                - th.UA * (T[:-1] - th.T_a)
                - uj[:, U["Q_t_out"]]
                - uj[:, U["d_t"]] / m.eta_steam
            )
            c[2: NX * N: NX] = n[1:] - n[:-1] - dt * (f[self.k_of_j, 0] - uj[:, U["f_H2_out"]] - uj[:, U["d_H2"]])
            base = NX * N
            c[base::3] = u[:, U["P_b_in"]] + u[:, U["P_t_in"]] + u[:, U["P_el"]] - self.P_sto_k
            c[base + 1::3] = (
                u[:, U["d_b"]] + u[:, U["d_t"]] + m.fuel_cell.watts_per_mol_s * u[:, U["d_H2"]]
                + u[:, U["s_d"]] - self.d_sto_k
            )
            c[base + 2::3] = u[:, U["P_el"]] - P[:, 0]
        return c[self.keep]

    def jacobian(self, z):
        u, x = self.split(z)
        vals = self._vals.copy()
        if self.N:
            th, dt = self.model.thermal, self.cfg.dt_sample
            T = x[:, 1]
            N = self.N
            vals[self._slot_T_next: self._slot_T_next + N] = th.m * th.cp(T[:-1])
            jj = self._jj
            nj = len(jj)
            vals[self._slot_T_curr: self._slot_T_curr + nj] = (
                th.m * th.cp1 * (T[jj + 1] - T[jj]) - th.m * th.cp(T[jj]) + dt * th.UA
            )
            P, f = self._electrolyzer(u[:, U["I"]])
            vals[self._slot_tank_I: self._slot_tank_I + N] = -dt * f[self.k_of_j, 1]
            vals[self._slot_el_I: self._slot_el_I + self.K] = -P[:, 1]
        return sp.csr_matrix((vals, (self._rows, self._cols)), shape=(self.m_full, self.n))[self.keep]

    def objective(self, z):
        """Negative profit (the NLP minimises)."""
        u, x = self.split(z)
        profit = (
            self.w_sell @ (u[:, U["P_b_out"]] - u[:, U["P_b_bo"]])
            + self.w_heat @ u[:, U["Q_t_out"]]
            + self.w_h2 @ u[:, U["f_H2_out"]]
            - self.w_slack * np.sum(u[:, U["s_d"]])
        ) if self.K else 0.0
        if self.tv_price:
            profit += terminal_value(x[-1], self.d, self.model)
        return -float(profit)

    def gradient(self, z):
        g = np.zeros(self.n)
        if not self.K:
            return g
        kk = np.arange(self.K)
        g[self.ui(kk, "P_b_out")] = -self.w_sell
        g[self.ui(kk, "P_b_bo")] = self.w_sell
        g[self.ui(kk, "Q_t_out")] = -self.w_heat
        g[self.ui(kk, "f_H2_out")] = -self.w_h2
        g[self.ui(kk, "s_d")] = self.w_slack
        if self.tv_price:
            _, x = self.split(z)
            m = self.model
            g[self.xi(self.N, 0)] = -self.tv_price * m.battery.eta_out
            g[self.xi(self.N, 1)] = -self.tv_price * m.eta_steam * m.thermal.m * m.thermal.cp(x[-1, 1])
            g[self.xi(self.N, 2)] = -self.tv_price * m.fuel_cell.watts_per_mol_s
        return g

    def hessian(self, z, lam, obj_factor):
        u, x = self.split(z)
        full = np.zeros(self.m_full)
        full[self.keep] = lam
        lam = full
        rows, cols, vals = [], [], []
        if self.N:
            N, K, dt = self.N, self.K, self.cfg.dt_sample
            th = self.model.thermal
            P, f = self._electrolyzer(u[:, U["I"]])
            lam_tank = lam[2: NX * N: NX]
            lam_el = lam[NX * N + 2::3]
            tank_sum = np.bincount(self.k_of_j, weights=lam_tank, minlength=K)
            kk = np.arange(K)
            iI = self.ui(kk, "I")
            rows.append(iI)
            cols.append(iI)
            vals.append(-dt * tank_sum * f[:, 2] - lam_el * P[:, 2])
            if th.cp1 != 0.0:
                lam_th = lam[1: NX * N: NX]
                jj = self._jj
                mb = th.m * th.cp1
                rows += [self.xi(jj, 1), self.xi(jj, 1), self.xi(jj + 1, 1)]
                cols += [self.xi(jj, 1), self.xi(jj + 1, 1), self.xi(jj, 1)]
                vals += [-2.0 * mb * lam_th[jj], mb * lam_th[jj], mb * lam_th[jj]]
            if self.tv_price and th.cp1 != 0.0:
                iT = np.atleast_1d(self.xi(N, 1))
                rows.append(iT)
                cols.append(iT)
                vals.append(np.atleast_1d(-obj_factor * self.tv_price * self.model.eta_steam * th.m * th.cp1))
        if rows:
            r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        else:
            r = c = np.zeros(0, int)
            v = np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))

    # -- initial guess ---------------------------------------------------------

    def initial_guess(self, controls=None):
        """Controls (default zero) with states propagated by the Euler model, clipped to bounds."""
        u = np.zeros((self.K, NU)) if controls is None else np.asarray(controls, dtype=float).reshape(self.K, NU)
        x = propagate(self.model, self.cfg, u, self.x0, clamp=True)[0]
        x = np.clip(x[1:], self.xs_lo, self.xs_hi)
        return np.concatenate([u.ravel(), x.ravel()])

    def problem(self, controls=None) -> NlpProblem:
        x_lo = np.concatenate([np.tile(self.u_lo, self.K), self.xs_lo.ravel()])
        x_hi = np.concatenate([self.u_hi_k.ravel(), self.xs_hi.ravel()])
        th = self.model.thermal
        T_ref = 0.5 * (th.T_min + th.T_max)
        row_scale = np.concatenate([
            np.tile([1.0 / _X_SCALE[0], 1.0 / (th.m * th.cp(T_ref) * _X_SCALE[1]), 1.0 / _X_SCALE[2]], self.N),
            np.full(3 * self.K, 1e-6),
        ])[self.keep]
        names = [f"{CONTROL_NAMES[i]}[{k}]" for k in range(self.K) for i in range(NU)]
        names += [f"{STATE_NAMES[s]}[{j}]" for j in range(1, self.N + 1) for s in range(NX)]
        return NlpProblem(
            n=self.n, m=self.m, x_lower=x_lo, x_upper=x_hi, x0=self.initial_guess(controls),
            objective=self.objective, gradient=self.gradient, constraints=self.constraints,
            jacobian=self.jacobian, hessian=self.hessian,
            x_scale=np.concatenate([np.tile(_U_SCALE, self.K), np.tile(_X_SCALE, self.N)]),
            c_scale=row_scale, var_names=names,
        )


def transcribe(model: PlantModel, cfg: OcpConfig, d: DisturbanceTrajectory, x0) -> Transcription:
    return Transcription(model, cfg, d, x0)


# -- simulation ------------------------------------------------------------------


def propagate(model: PlantModel, cfg: OcpConfig, controls, x0, clamp: bool = False):
    """Euler re-integration of the three storages under interval controls.

    Returns (states with shape (N+1, 3), saturation flags with shape (N, 3)).
    Negative round-off in the controls is clipped to zero.
    """
    S = cfg.samples_per_control
    u = np.maximum(np.asarray(controls, dtype=float).reshape(-1, NU), 0.0)
    N = len(u) * S
    dt = cfg.dt_sample
    x = np.empty((N + 1, NX))
    sat = np.zeros((N, NX), dtype=bool)
    x[0] = x0
    bat, th, el = model.battery, model.thermal, model.electrolyzer
    if not clamp:
        bat = replace(bat, E_min=-np.inf, E_max=np.inf)
        th_lo, th_hi = -np.inf, np.inf
    for j in range(N):
        uk = u[j // S]
        E, sat_b = step_battery(x[j, 0], uk[U["P_b_in"]] + uk[U["P_b_bo"]], uk[U["P_b_out"]] + uk[U["d_b"]], dt, bat)
        q_out = uk[U["Q_t_out"]] + uk[U["d_t"]] / model.eta_steam
        if clamp:
            T, sat_t = step_thermal(x[j, 1], uk[U["P_t_in"]], q_out, dt, th)
        else:
            T = x[j, 1] + dt * (th.eta_in * uk[U["P_t_in"]] - th.UA * (x[j, 1] - th.T_a) - q_out) / (th.m * th.cp(x[j, 1]))
            T, sat_t = min(max(T, th_lo), th_hi), False
        n = x[j, 2] + dt * (h2.hydrogen_rate(uk[U["I"]], el) - uk[U["f_H2_out"]] - uk[U["d_H2"]])
        if clamp:
            n_c = min(max(n, 0.0), model.n_max)
            sat_h, n = n_c != n, n_c
        else:
            sat_h = False
        x[j + 1] = (E, T, n)
        sat[j] = (sat_b, sat_t, sat_h)
    return x, sat


@dataclass
class OcpSolution:
    t_s: np.ndarray
    states: np.ndarray
    #: per control interval, (K, 12)
    controls: np.ndarray
    nlp: NlpSolution
    profit: float
    d_fc: np.ndarray
    samples_per_control: int

    def controls_per_sample(self):
        return np.repeat(self.controls, self.samples_per_control, axis=0)

    def rows(self):
        """Per-sample rows matching ``SOLUTION_HEADER``; states at the sample start."""
        u = self.controls_per_sample()
        dfc = np.repeat(self.d_fc, self.samples_per_control)
        for j in range(len(u)):
            uj = u[j]
            yield (
                self.t_s[j], *self.states[j],
                *uj[: U["d_t"] + 1], dfc[j], uj[U["s_d"]],
            )


def solve_ocp(model: PlantModel, cfg: OcpConfig, d: DisturbanceTrajectory, x0,
              options: IpmOptions | None = None, warm_start=None) -> OcpSolution:
    tr = transcribe(model, cfg, d, x0)
    nlp = tr.problem(controls=warm_start)
    sol = ipm_solve(nlp, options)
    u, x = tr.split(sol.x)
    # the solver works on bounds widened by round-off; report controls on the true box
    u = np.clip(u, tr.u_lo, tr.u_hi_k) if tr.K else u
    d_fc = model.fuel_cell.watts_per_mol_s * u[:, U["d_H2"]] if tr.K else np.zeros(0)
    t = cfg.t0 + cfg.dt_sample * np.arange(tr.N + 1)
    return OcpSolution(t_s=t, states=x, controls=u, nlp=sol, profit=-sol.objective,
                       d_fc=d_fc, samples_per_control=tr.S)


@dataclass
class OpenLoopReport:
    states: np.ndarray
    saturation: np.ndarray
    coverage_residual: np.ndarray
    slack: np.ndarray
    max_bound_violation: float
    max_state_mismatch: float
    simultaneous_charge_discharge: int
    dispatch_residual: float
    withdrawal_residual: float


def simulate_open_loop(model: PlantModel, cfg: OcpConfig, solution: OcpSolution,
                       d: DisturbanceTrajectory, x0) -> OpenLoopReport:
    """Re-integrate the solved controls and account for demand coverage.

    Coverage residual per sample is the deficit left after storage withdrawal,
    d_sto - (d_b + d_t + d_fc), which by the soft withdrawal balance equals the
    slack up to solver tolerance.
    """
    x, sat = propagate(model, cfg, solution.controls, x0, clamp=True)
    u = np.maximum(solution.controls_per_sample(), 0.0)
    d_fc = model.fuel_cell.watts_per_mol_s * u[:, U["d_H2"]]
    coverage = d.d_sto - (u[:, U["d_b"]] + u[:, U["d_t"]] + d_fc)
    lo, hi = cfg.state_bounds(model)
    viol = np.maximum(lo - solution.states, 0.0) / np.maximum(_X_SCALE, np.abs(lo))
    viol = np.maximum(viol, np.maximum(solution.states - hi, 0.0) / np.maximum(_X_SCALE, np.abs(hi)))
    mismatch = np.abs(x - solution.states) / np.maximum(np.abs(solution.states), _X_SCALE)
    dispatch = u[:, U["P_b_in"]] + u[:, U["P_t_in"]] + u[:, U["P_el"]] - d.P_sto
    withdrawal = u[:, U["d_b"]] + u[:, U["d_t"]] + d_fc + u[:, U["s_d"]] - d.d_sto
    both = (u[:, U["P_b_in"]] + u[:, U["P_b_bo"]] > 1.0) & (u[:, U["P_b_out"]] + u[:, U["d_b"]] > 1.0)
    return OpenLoopReport(
        states=x,
        saturation=sat,
        coverage_residual=coverage,
        slack=u[:, U["s_d"]],
        max_bound_violation=float(viol.max(initial=0.0)),
        max_state_mismatch=float(mismatch.max(initial=0.0)),
        simultaneous_charge_discharge=int(np.sum(both)),
        dispatch_residual=float(np.max(np.abs(dispatch) / np.maximum(1.0, d.P_sto), initial=0.0)),
        withdrawal_residual=float(np.max(np.abs(withdrawal) / np.maximum(1.0, d.d_sto), initial=0.0)),
    )
