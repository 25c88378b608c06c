"""Scenario configuration: TOML file to typed parameter objects.

Every table maps onto one parameter dataclass and keys are that class's
field names. A key ending in ``_deg`` or ``_rpm`` is accepted in place of the
radian (rad/s) field it names, e.g. ``latitude_deg`` for ``latitude``.
Turbine pitch limits are already in degrees and take no suffix.
Unknown tables and keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .hydrogen import ElectrolyzerParams, FuelCellParams, PengRobinsonGas
from .ipm import IpmOptions
from .ocp import OcpConfig, PlantModel, PriceConfig
from .solar import PvParams, RadiationParams, SolarSite
from .storage import BatteryParams, ThermalParams
from .turbine import RPM, TurbineParams
from .weather import CloudParams, WindParams

_UNIT_SUFFIXES = {"_deg": math.pi / 180.0, "_rpm": RPM}
# only these fields are stored in radians or rad/s (pitch stays in degrees)
_RADIAN_FIELDS = {"latitude", "longitude", "h_min", "omega_min", "omega_max"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSettings:
    """Top-level scenario knobs.

    Times in s, powers in W. ``v_m0`` (m/s) and ``kappa0`` (cloud fraction)
    start the weather model; ``include_turbulence`` adds the turbulent wind
    component to the turbine input. The wind is integrated with
    ``wind_substeps`` inner steps per sample because explicit Euler on the
    turbulence is unstable at a 10 min step.
    """

    seed: int = 1
    horizon: float = 3 * 86400.0
    n_turbines: int = 1
    demand: float = 4e6
    v_m0: float = 10.0
    kappa0: float = 0.5
    t_start: float = 0.0
    include_turbulence: bool = False
    wind_substeps: int = 300
    cp_table: Optional[str] = None
    out_dir: str = "out"

    def __post_init__(self):
        if self.n_turbines < 0:
            raise ValueError("n_turbines must be non-negative")
        if self.demand < 0:
            raise ValueError("demand must be non-negative")
        if not 0.0 <= self.kappa0 <= 1.0:
            raise ValueError("kappa0 must lie in [0, 1]")
        if self.v_m0 < 0:
            raise ValueError("v_m0 must be non-negative")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


@dataclass(frozen=True)
class InitialState:
    E_b: float = 0.5 * 1.8e10
    T: float = 685.5
    n_H2: float = 0.0


@dataclass(frozen=True)
class TankConfig:
    V: float = 30.0
    T_tank: float = 298.15
    n_max: float = 1000.0 / 0.002016


@dataclass(frozen=True)
class ScenarioConfig:
    run: RunSettings = RunSettings()
    initial: InitialState = InitialState()
    wind: WindParams = WindParams()
    cloud: CloudParams = CloudParams()
    site: SolarSite = SolarSite()
    radiation: RadiationParams = RadiationParams()
    pv: PvParams = PvParams()
    turbine: TurbineParams = TurbineParams()
    battery: BatteryParams = BatteryParams()
    thermal: ThermalParams = ThermalParams()
    electrolyzer: ElectrolyzerParams = ElectrolyzerParams()
    tank: TankConfig = TankConfig()
    gas: PengRobinsonGas = PengRobinsonGas()
    fuel_cell: FuelCellParams = FuelCellParams()
    eta_steam: float = 0.4
    ocp: OcpConfig = field(default_factory=lambda: OcpConfig())
    prices: PriceConfig = PriceConfig()
    solver: IpmOptions = field(default_factory=IpmOptions)

    def plant(self) -> PlantModel:
        return PlantModel(
            battery=self.battery, thermal=self.thermal, electrolyzer=self.electrolyzer,
            fuel_cell=self.fuel_cell, eta_steam=self.eta_steam, n_max=self.tank.n_max,
        )

    def ocp_config(self) -> OcpConfig:
        """The OCP grid aligned with the run horizon."""
        return dataclasses.replace(self.ocp, tf=self.ocp.t0 + self.run.horizon)

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None) -> "ScenarioConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes)) if changes else self


# table name -> ScenarioConfig attribute
_TABLES = {
    "run": "run", "initial_state": "initial", "wind": "wind", "cloud": "cloud", "site": "site",
    "radiation": "radiation", "pv": "pv", "turbine": "turbine", "battery": "battery",
    "thermal": "thermal", "electrolyzer": "electrolyzer", "tank": "tank", "gas": "gas",
    "fuel_cell": "fuel_cell", "ocp": "ocp", "prices": "prices", "solver": "solver",
}
_SCALARS = {"eta_steam"}


def _build(cls, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in table.items():
        target, factor = key, 1.0
        for suffix, f in _UNIT_SUFFIXES.items():
            base = key[: -len(suffix)]
            if key.endswith(suffix) and base in names and base in _RADIAN_FIELDS:
                target, factor = key[: -len(suffix)], f
        if target not in names:
            raise ConfigError(f"unknown key {where}.{key}")
        if target in kwargs:
            raise ConfigError(f"{where}.{target} given twice")
        if isinstance(value, list):
            value = tuple(value)
        elif factor != 1.0:
            value = float(value) * factor
        kwargs[target] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def from_dict(data: dict) -> ScenarioConfig:
    base = ScenarioConfig()
    kwargs = {}
    for key, value in data.items():
        if key in _SCALARS:
            kwargs[key] = float(value)
            continue
        if key not in _TABLES:
            raise ConfigError(f"unknown table or key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{key} must be a table")
        attr = _TABLES[key]
        kwargs[attr] = _build(type(getattr(base, attr)), value, key)
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ScenarioConfig:
    """Read a scenario file; ``None`` loads the packaged defaults."""
    if path is None:
        text = resources.files("hybridres").joinpath("data/default.toml").read_text()
        source = "default.toml"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        source = str(path)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return from_dict(data)
