"""Alkaline electrolysis, hydrogen storage and fuel-cell reconversion.

Units: currents in A, cell area in cm^2, electrolyser temperature in degC
(as the U-I coefficients were fitted), tank temperature in K, amounts in mol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.optimize import brentq

F = 96485.0
R_GAS = 8.314462618
LN10 = math.log(10.0)
MM_H2 = 0.002016
#: higher heating value of hydrogen, J/kg
HHV_H2 = 141_800e3


@dataclass(frozen=True)
class ThermoConstants:
    dH: float = 285.8e3
    dG: float = 237.2e3
    z: int = 2
    F: float = F

    def __post_init__(self):
        if not self.dH > self.dG > 0:
            raise ValueError("need dH > dG > 0")

    @property
    def TdS(self) -> float:
        return self.dH - self.dG


def reversible_voltage(c: ThermoConstants = ThermoConstants()) -> float:
    return c.dG / (c.z * c.F)


def thermoneutral_voltage(c: ThermoConstants = ThermoConstants()) -> float:
    return c.dH / (c.z * c.F)


@dataclass(frozen=True)
class ElectrolyzerParams:
    r1: float = 0.8
    r2: float = -0.00763
    s: float = 0.1795
    t1: float = 20.0
    t2: float = 0.1
    t3: float = 3.5e5
    f1: float = 250.0
    f2: float = 0.980
    A: float = 2500.0
    n_c: int = 1526
    T_el: float = 80.0
    P_rated: float = 2.4e6
    thermo: ThermoConstants = ThermoConstants()
    #: evaluate U_rev at T_el (constant dH and dS) instead of at 25 degC
    u_rev_at_T_el: bool = False

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("cell area must be positive")
        if self.n_c < 1:
            raise ValueError("need at least one cell")
        if not 0 < self.f2 <= 1:
            raise ValueError("f2 must lie in (0, 1]")

    @property
    def ohmic(self) -> float:
        """Area-specific resistance at T_el, Ohm cm^2."""
        return self.r1 + self.r2 * self.T_el

    @property
    def tafel(self) -> float:
        """Activation coefficient at T_el, cm^2/A."""
        return self.t1 + self.t2 / self.T_el + self.t3 / self.T_el**2

    @property
    def U_rev(self) -> float:
        if not self.u_rev_at_T_el:
            return reversible_voltage(self.thermo)
        c = self.thermo
        dG = c.dH - (self.T_el + 273.15) * c.TdS / 298.15
        return dG / (c.z * c.F)


def _nonneg_current(I):
    if not I >= 0 or not math.isfinite(I):
        raise ValueError(f"current must be finite and non-negative, got {I}")


def ohmic_overvoltage(I, p: ElectrolyzerParams) -> float:
    return p.ohmic * I / p.A


def activation_overvoltage(I, p: ElectrolyzerParams) -> float:
    return p.s * math.log10(p.tafel * I / p.A + 1.0)


def cell_voltage(I, p: ElectrolyzerParams) -> float:
    """U_rev + ohmic + activation overvoltage (concentration term neglected)."""
    _nonneg_current(I)
    return p.U_rev + ohmic_overvoltage(I, p) + activation_overvoltage(I, p)


def cell_voltage_derivatives(I, p: ElectrolyzerParams):
    """(U, dU/dI, d2U/dI2)."""
    x = p.tafel * I / p.A + 1.0
    U = p.U_rev + p.ohmic * I / p.A + p.s * math.log10(x)
    dU = p.ohmic / p.A + p.s * p.tafel / (p.A * LN10 * x)
    d2U = -p.s * p.tafel**2 / (p.A**2 * LN10 * x * x)
    return U, dU, d2U


def stack_power(I, p: ElectrolyzerParams) -> float:
    return I * p.n_c * cell_voltage(I, p)


def stack_power_derivatives(I, p: ElectrolyzerParams):
    """(P, dP/dI, d2P/dI2) of the stack power."""
    U, dU, d2U = cell_voltage_derivatives(I, p)
    return p.n_c * I * U, p.n_c * (U + I * dU), p.n_c * (2.0 * dU + I * d2U)


def max_current(p: ElectrolyzerParams) -> float:
    return current_from_power(p.P_rated, p)


def current_from_power(P, p: ElectrolyzerParams, rtol: float = 1e-12) -> float:
    """Invert ``stack_power`` by bracketed root finding.

    ``stack_power`` is strictly increasing for I >= 0, so the root is unique.
    """
    if not math.isfinite(P) or P < 0:
        raise ValueError(f"power must be finite and non-negative, got {P}")
    if P == 0:
        return 0.0
    # P >= n_c * U_rev * I bounds the root from above
    hi = P / (p.n_c * p.U_rev)
    return brentq(lambda I: stack_power(I, p) - P, 0.0, hi, xtol=1e-300, rtol=max(rtol, 4.5e-16), maxiter=200)


def faraday_efficiency(I, p: ElectrolyzerParams) -> float:
    """Current efficiency; current density enters in mA/cm^2."""
    _nonneg_current(I)
    j = 1000.0 * I / p.A
    return j * j / (p.f1 + j * j) * p.f2


def hydrogen_rate(I, p: ElectrolyzerParams) -> float:
    """Hydrogen production in mol/s."""
    return p.n_c * faraday_efficiency(I, p) * I / (p.thermo.z * p.thermo.F)


def hydrogen_rate_derivatives(I, p: ElectrolyzerParams):
    """(f, df/dI, d2f/dI2) of the hydrogen production rate."""
    k = 1000.0 / p.A
    j = k * I
    den = p.f1 + j * j
    eta = p.f2 * j * j / den
    d_eta = p.f2 * 2.0 * p.f1 * j / den**2 * k
    d2_eta = p.f2 * p.f1 * (2.0 * p.f1 - 6.0 * j * j) / den**3 * k * k
    c = p.n_c / (p.thermo.z * p.thermo.F)
    return c * I * eta, c * (eta + I * d_eta), c * (2.0 * d_eta + I * d2_eta)


def oxygen_rate(I, p: ElectrolyzerParams) -> float:
    return 0.5 * hydrogen_rate(I, p)


def heat_generation(I, p: ElectrolyzerParams) -> float:
    """Heat released by the stack, n_c (U_cell - U_tn) I, in W."""
    return p.n_c * (cell_voltage(I, p) - thermoneutral_voltage(p.thermo)) * I


def size_stack(p: ElectrolyzerParams, P_rated: float, current_density: float = 0.4) -> ElectrolyzerParams:
    """Pick n_c so the stack draws ``P_rated`` at ``current_density`` A/cm^2."""
    I = current_density * p.A
    n_c = max(1, round(P_rated / (I * cell_voltage(I, replace(p, n_c=1)))))
    return replace(p, n_c=n_c, P_rated=P_rated)


ELECTROLYZER_CURVE_HEADER = ("I_A", "U_cell_V", "P_el_W", "eta_F", "f_H2_mol_s", "Q_gen_W")


def electrolyzer_curve_rows(p: ElectrolyzerParams, currents):
    for I in currents:
        I = float(I)
        yield (
            I,
            cell_voltage(I, p),
            stack_power(I, p),
            faraday_efficiency(I, p),
            hydrogen_rate(I, p),
            heat_generation(I, p),
        )


# -- storage tank -----------------------------------------------------------


@dataclass(frozen=True)
class PengRobinsonGas:
    """Pure-component Peng-Robinson constants (hydrogen by default)."""

    T_c: float = 33.19
    P_c: float = 1.313e6
    omega: float = -0.216

    @property
    def b(self) -> float:
        return 0.07780 * R_GAS * self.T_c / self.P_c

    def a_alpha(self, T: float) -> float:
        a = 0.45724 * (R_GAS * self.T_c) ** 2 / self.P_c
        kappa = 0.37464 + 1.54226 * self.omega - 0.26992 * self.omega**2
        alpha = (1.0 + kappa * (1.0 - math.sqrt(T / self.T_c))) ** 2
        return a * alpha


@dataclass(frozen=True)
class TankState:
    n: float
    V: float = 30.0
    T_tank: float = 298.15

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError("tank volume must be positive")
        if self.n < 0:
            raise ValueError("stored amount must be non-negative")


def tank_step(state: TankState, f_in, f_out, dt, n_max=math.inf):
    """Euler step of the mol balance; returns (state', saturated)."""
    if f_in < 0 or f_out < 0:
        raise ValueError("tank flows must be non-negative")
    n = state.n + dt * (f_in - f_out)
    clamped = min(max(n, 0.0), n_max)
    return replace(state, n=clamped), clamped != n


def tank_pressure(state: TankState, gas: PengRobinsonGas = PengRobinsonGas()) -> float:
    """Peng-Robinson pressure in Pa."""
    if not state.n > 0:
        raise ValueError("pressure needs a positive stored amount")
    Vm = state.V / state.n
    b = gas.b
    if Vm <= b:
        raise ValueError(f"molar volume {Vm:.3e} m^3/mol is below the co-volume {b:.3e}")
    T = state.T_tank
    return R_GAS * T / (Vm - b) - gas.a_alpha(T) / (Vm * Vm + 2.0 * b * Vm - b * b)


def ideal_gas_pressure(state: TankState) -> float:
    return state.n * R_GAS * state.T_tank / state.V


TANK_TRACE_HEADER = ("t_s", "n_mol", "P_Pa")


# -- fuel cell --------------------------------------------------------------


@dataclass(frozen=True)
class FuelCellParams:
    eta_fc: float = 0.6
    MM_H2: float = MM_H2

    def __post_init__(self):
        if not 0 < self.eta_fc <= 1:
            raise ValueError("eta_fc must lie in (0, 1]")

    @property
    def watts_per_mol_s(self) -> float:
        return HHV_H2 * self.eta_fc * self.MM_H2


def fuel_cell_power(d_H2, p: FuelCellParams = FuelCellParams()) -> float:
    """Electric output in W for a hydrogen draw of ``d_H2`` mol/s."""
    if d_H2 < 0:
        raise ValueError("hydrogen draw must be non-negative")
    return p.watts_per_mol_s * d_H2
