"""Stochastic weather drivers: wind speed and cloud cover.

Both processes are integrated with fixed-step Euler-Maruyama. The steppers
are pure functions of (state, parameters, noise increment) so they can be
vectorised over ensembles or driven by any noise source; ``simulate_weather``
composes them with a seeded :class:`RandomStream`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.special import expit

CLOUD_EPS = 1e-9

#: Legendre coefficients of the cloud-cover mean, k = 1..7.
DEFAULT_CLOUD_COEFFS = (-53.1, 14.6, -42.3, 8.8, -58.1, -30.3, -45.7)


@dataclass(frozen=True)
class WindParams:
    """Wind speed model parameters.

    ``sigma2`` is the diffusion of the mean wind speed in m s^-3/2 when
    ``sigma2_unit`` is ``"per_second"``; with ``"per_hour"`` the increment is
    measured in hours instead.
    """

    L: float = 170.1
    t_i: float = 0.2
    sigma2: float = math.sqrt(4.0 / 600.0)
    v_m_fixed: Optional[float] = None
    sigma2_unit: str = "per_second"

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"turbulence length must be positive, got {self.L}")
        if not self.t_i > 0:
            raise ValueError(f"turbulence intensity must be positive, got {self.t_i}")
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")
        if self.sigma2_unit not in ("per_second", "per_hour"):
            raise ValueError(f"unknown sigma2_unit {self.sigma2_unit!r}")
        if self.v_m_fixed is not None and self.v_m_fixed < 0:
            raise ValueError("v_m_fixed must be non-negative")


@dataclass(frozen=True)
class WindState:
    v_m: float
    v_t: float

    @property
    def v(self) -> float:
        """Total wind speed, floored at zero."""
        return max(self.v_m + self.v_t, 0.0)


@dataclass(frozen=True)
class CloudParams:
    """Cloud cover mean-reversion parameters.

    Rates are per hour by default (``rate_unit="per_hour"``) and are rescaled
    to the caller's step in seconds.
    """

    theta_tilde: float = 0.187
    sigma: float = 0.835
    p: tuple = DEFAULT_CLOUD_COEFFS
    mu_fixed: Optional[float] = None
    rate_unit: str = "per_hour"

    def __post_init__(self):
        if not self.theta_tilde >= 0:
            raise ValueError("theta_tilde must be non-negative")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.rate_unit not in ("per_hour", "per_second"):
            raise ValueError(f"unknown rate_unit {self.rate_unit!r}")
        if self.mu_fixed is not None and not 0.0 <= self.mu_fixed <= 1.0:
            raise ValueError("mu_fixed must lie in [0, 1]")
        object.__setattr__(self, "p", tuple(float(c) for c in self.p))

    @property
    def time_scale(self) -> float:
        """Model time units per second."""
        return 1.0 / 3600.0 if self.rate_unit == "per_hour" else 1.0


class RandomStream:
    """Seeded source of Wiener increments.

    One stream per simulation; streams are not meant to be shared between
    threads. ``counter`` is the number of standard normals drawn so far.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, size=None) -> np.ndarray:
        out = self._rng.standard_normal(size)
        self.counter += 1 if size is None else int(np.prod(size))
        return out

    def increments(self, dt: float, size=None):
        """Draws from N(0, dt)."""
        return math.sqrt(dt) * self.normal(size)

    def spawn(self, n: int) -> list["RandomStream"]:
        """Independent child streams derived from this stream's seed."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [RandomStream(int(c.generate_state(1, dtype=np.uint64)[0])) for c in children]


def _check_finite(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{name} must be finite, got {value}")


def step_wind(state: WindState, p: WindParams, dt: float, dW1: float, dW2: float) -> WindState:
    """One Euler-Maruyama step of the turbulent and mean wind speeds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_finite(v_m=state.v_m, v_t=state.v_t, dW1=dW1, dW2=dW2)
    v_m = p.v_m_fixed if p.v_m_fixed is not None else max(state.v_m, 0.0)
    a = math.pi * v_m / (2.0 * p.L)
    b = math.sqrt(math.pi * v_m**3 * p.t_i**2 / p.L)
    v_t = state.v_t - a * state.v_t * dt + b * dW1
    if p.v_m_fixed is not None:
        v_m_new = p.v_m_fixed
    else:
        dW2 = dW2 / 60.0 if p.sigma2_unit == "per_hour" else dW2
        v_m_new = max(v_m + p.sigma2 * dW2, 0.0)
    return WindState(v_m=v_m_new, v_t=v_t)


@functools.lru_cache(maxsize=32)
def _series_in_kappa(p: tuple) -> tuple:
    """Power-series coefficients (highest first) of sum_k p_k L_k(2 kappa - 1)."""
    series = legendre.Legendre((0.0,) + p, domain=[0.0, 1.0]).convert(kind=np.polynomial.Polynomial)
    return tuple(float(c) for c in series.coef[::-1])


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def cloud_mean(kappa, p: CloudParams):
    """Logistic of the Legendre series sum_k p_k L_k(2 kappa - 1), k = 1..7."""
    if np.ndim(kappa) == 0:
        kappa = float(kappa)
        if not 0.0 <= kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
        if p.mu_fixed is not None:
            return p.mu_fixed
        z = 0.0
        for c in _series_in_kappa(p.p):
            z = z * kappa + c
        return min(max(_logistic(z), CLOUD_EPS), 1.0 - CLOUD_EPS)
    kappa = np.asarray(kappa, dtype=float)
    if np.any((kappa < 0) | (kappa > 1)):
        raise ValueError("kappa must lie in [0, 1]")
    if p.mu_fixed is not None:
        return np.full_like(kappa, p.mu_fixed)
    # clipped so the mean stays strictly inside (0, 1) where the series saturates
    return np.clip(expit(legendre.legval(2.0 * kappa - 1.0, (0.0,) + p.p)), CLOUD_EPS, 1.0 - CLOUD_EPS)


def step_cloud(kappa: float, p: CloudParams, dt: float, dW: float) -> float:
    """One Euler-Maruyama step of the cloud cover fraction.

    ``dt`` is in seconds and ``dW`` ~ N(0, dt). Exact 0 and 1 are absorbing;
    any other result is clamped into [eps, 1 - eps].
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_finite(dW=dW)
    if kappa == 0.0 or kappa == 1.0:
        return kappa
    s = p.time_scale
    spread = kappa * (1.0 - kappa)
    theta = p.theta_tilde * math.sqrt(spread)
    mu = cloud_mean(kappa, p)
    k = kappa + theta * (mu - kappa) * dt * s + p.sigma * spread * dW * math.sqrt(s)
    return min(max(k, CLOUD_EPS), 1.0 - CLOUD_EPS)


def to_okta(kappa):
    return 8.0 * np.asarray(kappa, dtype=float) if np.ndim(kappa) else 8.0 * float(kappa)


@dataclass
class WeatherTrace:
    t_s: np.ndarray
    v_m: np.ndarray
    v_t: np.ndarray
    v: np.ndarray
    kappa: np.ndarray
    okta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.okta = 8.0 * self.kappa

    def __len__(self):
        return len(self.t_s)

    def columns(self):
        return {
            "t_s": self.t_s,
            "v_m": self.v_m,
            "v_t": self.v_t,
            "v": self.v,
            "kappa": self.kappa,
            "okta": self.okta,
        }


def _n_steps(horizon: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    n = horizon / dt
    if n > 1e9:
        raise OverflowError(f"horizon/dt = {n:g} steps is too many")
    n_int = int(round(n))
    if abs(n - n_int) > 1e-9 * max(1.0, n):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    return n_int


def simulate_weather(
    p_wind: WindParams,
    p_cloud: CloudParams,
    v_m0: float,
    kappa0: float,
    horizon: float,
    dt: float,
    seed: int,
    substeps: int = 1,
    v_t0: float = 0.0,
) -> WeatherTrace:
    """Simulate wind and cloud cover, recording every ``dt`` seconds.

    Wind is integrated with ``substeps`` inner Euler steps per recorded
    interval; the turbulent component needs this whenever
    ``pi*v_m/(2L) * dt`` is not small. Cloud cover evolves on hourly scales
    and takes one step per recorded interval.
    """
    n = _n_steps(horizon, dt)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    stream = RandomStream(seed)
    wind_noise = stream.increments(h, size=(n * substeps, 2))
    cloud_noise = stream.increments(dt, size=n)

    v_m = np.empty(n + 1)
    v_t = np.empty(n + 1)
    kappa = np.empty(n + 1)
    state = WindState(v_m=p_wind.v_m_fixed if p_wind.v_m_fixed is not None else v_m0, v_t=v_t0)
    k = float(kappa0)
    v_m[0], v_t[0], kappa[0] = state.v_m, state.v_t, k
    row = 0
    for i in range(1, n + 1):
        if math.pi * state.v_m / (2.0 * p_wind.L) * h >= 2.0:
            need = math.ceil(math.pi * state.v_m * dt / (2.0 * p_wind.L))
            raise ValueError(f"turbulence Euler step diverges at v_m={state.v_m:.2f} m/s; "
                             f"use at least {need} substeps")
        for _ in range(substeps):
            state = step_wind(state, p_wind, h, wind_noise[row, 0], wind_noise[row, 1])
            row += 1
        k = step_cloud(k, p_cloud, dt, cloud_noise[i - 1])
        v_m[i], v_t[i], kappa[i] = state.v_m, state.v_t, k
    t = dt * np.arange(n + 1)
    return WeatherTrace(t_s=t, v_m=v_m, v_t=v_t, v=np.maximum(v_m + v_t, 0.0), kappa=kappa)


def stationary_turbulence_std(p: WindParams, v_m: float) -> float:
    """Stationary std of the turbulent component at a frozen mean speed."""
    return p.t_i * v_m
