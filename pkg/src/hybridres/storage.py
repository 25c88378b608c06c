"""Battery and sensible thermal storage energy balances."""

from __future__ import annotations

from dataclasses import dataclass

from scipy.integrate import quad


@dataclass(frozen=True)
class BatteryParams:
    alpha_b: float = 1e-7
    eta_in: float = 0.95
    eta_out: float = 0.95
    E_min: float = 0.0
    E_max: float = 5.0 * 3.6e9

    def __post_init__(self):
        if self.alpha_b < 0:
            raise ValueError("alpha_b must be non-negative")
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise ValueError("battery efficiencies must lie in (0, 1]")
        if not self.E_min < self.E_max:
            raise ValueError("need E_min < E_max")


@dataclass(frozen=True)
class ThermalParams:
    """Sensible heat store; specific heat is ``cp0 + cp1 * T`` in J/(kg K)."""

    m: float = 393_442.6
    cp0: float = 1500.0
    cp1: float = 0.0
    UA: float = 500.0
    eta_in: float = 0.99
    T_min: float = 533.0
    T_max: float = 838.0
    T_a: float = 288.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if self.UA < 0:
            raise ValueError("UA must be non-negative")
        if not 0 < self.eta_in <= 1:
            raise ValueError("eta_in must lie in (0, 1]")
        if not self.T_min < self.T_max:
            raise ValueError("need T_min < T_max")
        if min(self.cp(self.T_min), self.cp(self.T_max)) <= 0:
            raise ValueError("specific heat must be positive on [T_min, T_max]")

    def cp(self, T):
        return self.cp0 + self.cp1 * T

    def heat_content(self, T_from, T_to):
        """m * integral of cp over [T_from, T_to] in closed form (J)."""
        return self.m * (self.cp0 * (T_to - T_from) + 0.5 * self.cp1 * (T_to**2 - T_from**2))


@dataclass(frozen=True)
class StorageState:
    E_b: float
    T: float


def _nonneg(**flows):
    for name, value in flows.items():
        if value < 0:
            raise ValueError(f"{name} must be non-negative, got {value}")


def battery_rhs(E_b, P_in, P_out, p: BatteryParams):
    """dE_b/dt in W."""
    _nonneg(P_in=P_in, P_out=P_out)
    return -p.alpha_b * E_b + p.eta_in * P_in - P_out / p.eta_out


def step_battery(E_b, P_in, P_out, dt, p: BatteryParams):
    """Explicit Euler step; returns (E_b', saturated)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = E_b + dt * battery_rhs(E_b, P_in, P_out, p)
    clamped = min(max(e, p.E_min), p.E_max)
    return clamped, clamped != e


def thermal_rhs(T, P_in, Q_out, p: ThermalParams):
    """dT/dt in K/s."""
    _nonneg(P_in=P_in, Q_out=Q_out)
    return (p.eta_in * P_in - p.UA * (T - p.T_a) - Q_out) / (p.m * p.cp(T))


def step_thermal(T, P_in, Q_out, dt, p: ThermalParams):
    """Explicit Euler step; returns (T', saturated)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = T + dt * thermal_rhs(T, P_in, Q_out, p)
    clamped = min(max(t, p.T_min), p.T_max)
    return clamped, clamped != t


def specific_storage_capacity(p: ThermalParams, exact: bool = False) -> float:
    """Integral of cp(T) over [T_min, T_max] in J/kg.

    Uses adaptive quadrature; ``exact=True`` returns the closed form, which
    the affine specific heat admits.
    """
    if exact:
        return p.heat_content(p.T_min, p.T_max) / p.m
    value, _ = quad(p.cp, p.T_min, p.T_max)
    return value


def mass_for_capacity(energy_J: float, p: ThermalParams) -> float:
    return energy_J / specific_storage_capacity(p)


STORAGE_TRACE_HEADER = ("t_s", "E_b_J", "T_K", "sat_b", "sat_t")
