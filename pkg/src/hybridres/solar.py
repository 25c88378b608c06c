"""Sun position, cloud-modulated direct/diffuse radiation and PV output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEG = math.pi / 180.0


@dataclass(frozen=True)
class SolarSite:
    latitude: float = 55.7 * DEG
    longitude: float = 12.6 * DEG
    day_of_year: int = 172
    utc_offset: float = 0.0

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2:
            raise ValueError("|latitude| must not exceed pi/2")
        if not 1 <= self.day_of_year <= 365:
            raise ValueError("day_of_year must be in 1..365")


def _okta_table(values):
    arr = tuple(float(v) for v in values)
    if len(arr) != 9:
        raise ValueError("per-okta tables need 9 entries (okta 0..8)")
    if min(arr) < 0:
        raise ValueError("per-okta variances must be non-negative")
    return arr


@dataclass(frozen=True)
class RadiationParams:
    """Direct and diffuse radiation model coefficients.

    ``elevation_unit`` selects the unit of h inside the clear-sky
    exponentials (``"deg"`` or ``"rad"``). ``noise_time_unit`` is the unit of
    dt in the noise variances.
    """

    a_N: float = 842.3
    b_N: float = 0.0614
    r_N: float = 1.0430
    alpha_N: float = 4.6368
    a_prime: float = 1.1354
    b_prime: float = 0.1965
    c_prime: float = -0.2571
    a_D: float = 161.1
    b_D: float = 0.0333
    c_D: float = 3.68
    r1: float = 0.7067
    r2: float = -0.2456
    r3: float = 0.5625
    k1: float = 0.1946
    k2: float = 0.1549
    k3: float = 0.6034
    a2: float = 6.7033
    alpha_D: float = 2.2993
    r_D: float = 1.0170
    sigma_N_by_okta: tuple = field(default=(0.05,) * 9)
    sigma_D_by_okta: tuple = field(default=(0.05,) * 9)
    h_min: float = 5.0 * DEG
    elevation_unit: str = "deg"
    noise_time_unit: str = "hour"
    direct_cap: float = 1.2

    def __post_init__(self):
        for name in ("a_N", "b_N", "a_D", "b_D"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.elevation_unit not in ("deg", "rad"):
            raise ValueError(f"unknown elevation_unit {self.elevation_unit!r}")
        if self.noise_time_unit not in ("hour", "second"):
            raise ValueError(f"unknown noise_time_unit {self.noise_time_unit!r}")
        object.__setattr__(self, "sigma_N_by_okta", _okta_table(self.sigma_N_by_okta))
        object.__setattr__(self, "sigma_D_by_okta", _okta_table(self.sigma_D_by_okta))

    def _h(self, h):
        return h / DEG if self.elevation_unit == "deg" else h

    def noise_dt(self, dt_seconds):
        return dt_seconds / 3600.0 if self.noise_time_unit == "hour" else dt_seconds


@dataclass(frozen=True)
class PvParams:
    A_s: float = 30000.0
    eta_s: float = 0.2

    def __post_init__(self):
        if self.A_s < 0:
            raise ValueError("A_s must be non-negative")
        if not 0.0 <= self.eta_s <= 1.0:
            raise ValueError("eta_s must lie in [0, 1]")


def declination(day_of_year) -> float:
    return 23.45 * DEG * np.sin(2.0 * np.pi * (284 + np.asarray(day_of_year)) / 365.0)


def sun_elevation(site: SolarSite, t, day_of_year=None):
    """Sun elevation angle in radians at clock time ``t`` seconds of day.

    Local solar time is the clock time shifted by the UTC offset and the
    longitude (15 degrees per hour); the equation of time is neglected.
    """
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t >= 86400)):
        raise ValueError("t must be seconds of day in [0, 86400)")
    d = site.day_of_year if day_of_year is None else day_of_year
    delta = declination(d)
    solar_hours = t / 3600.0 - site.utc_offset + site.longitude / (15.0 * DEG)
    omega = 15.0 * DEG * (solar_hours - 12.0)
    phi = site.latitude
    s = np.sin(phi) * np.sin(delta) + np.cos(phi) * np.cos(delta) * np.cos(omega)
    h = np.arcsin(np.clip(s, -1.0, 1.0))
    return h.item() if h.ndim == 0 else h


def solar_noon_seconds(site: SolarSite) -> float:
    return 3600.0 * (12.0 + site.utc_offset - site.longitude / (15.0 * DEG))


def clear_sky_direct(h, p: RadiationParams = RadiationParams()):
    h = np.asarray(h, dtype=float)
    out = np.where(h > 0, p.a_N * (1.0 - np.exp(-p.b_N * p._h(np.maximum(h, 0.0)))), 0.0)
    return out.item() if out.ndim == 0 else out


def clear_sky_diffuse(h, p: RadiationParams = RadiationParams()):
    h = np.asarray(h, dtype=float)
    out = np.where(h > 0, p.c_D + p.a_D * (1.0 - np.exp(-p.b_D * p._h(np.maximum(h, 0.0)))), 0.0)
    return out.item() if out.ndim == 0 else out


def direct_cloud_factor(okta, d_t, p: RadiationParams):
    season = p.a_prime + p.b_prime * np.cos(2.0 * np.pi * d_t / 365.0 + p.c_prime)
    return season / (1.0 + np.exp(okta - p.alpha_N))


def diffuse_cloud_factor(okta, d_t, p: RadiationParams):
    w = 2.0 * np.pi * d_t / 365.0
    a0 = p.r1 + p.r2 * np.cos(w + p.r3)
    a1 = p.k1 + p.k2 * np.cos(w + p.k3)
    c = okta / 8.0
    return a0 + a1 * (1.0 - c) + p.a2 * c**p.alpha_D * (1.0 - c)


def _check_okta(okta):
    if np.any((np.asarray(okta) < 0) | (np.asarray(okta) > 8)):
        raise ValueError("okta must lie in [0, 8]")


def _sigma(table, okta):
    return np.interp(okta, np.arange(9.0), table)


def direct_radiation(okta, h, d_t, p: RadiationParams, dW=0.0):
    """Beam radiation I_N in W/m^2 on a plane normal to the sun.

    ``dW`` ~ N(0, dt) is the Wiener increment over the sample, dt measured in
    ``p.noise_time_unit``; the relative noise is r_N*sigma_D(okta)/(sin h * I_0N) * dW with
    sin h floored at sin(h_min). Returns 0 for h <= h_min and is clipped to
    [0, direct_cap * I_0N].
    """
    _check_okta(okta)
    if h <= p.h_min:
        return 0.0
    i0 = clear_sky_direct(h, p)
    sin_h = max(math.sin(h), math.sin(p.h_min))
    eps = p.r_N * _sigma(p.sigma_D_by_okta, okta) / (sin_h * i0) * dW
    value = i0 * (direct_cloud_factor(okta, d_t, p) + eps)
    return float(min(max(value, 0.0), p.direct_cap * i0))


def diffuse_radiation(okta, h, d_t, p: RadiationParams, dW=0.0):
    """Diffuse radiation I_D in W/m^2; ``dW`` ~ N(0, dt) as for the direct part."""
    _check_okta(okta)
    if h <= p.h_min:
        return 0.0
    i0 = clear_sky_diffuse(h, p)
    eps = _sigma(p.sigma_N_by_okta, okta) * p.r_D * dW
    return float(max(i0 * (diffuse_cloud_factor(okta, d_t, p) + eps), 0.0))


def global_radiation(I_N, I_D, h):
    if np.any(np.asarray(I_N) < 0) or np.any(np.asarray(I_D) < 0):
        raise ValueError("radiation components must be non-negative")
    return np.maximum(I_N * np.sin(h) + I_D, 0.0)


def pv_power(I_G, p: PvParams):
    if np.any(np.asarray(I_G) < 0):
        raise ValueError("I_G must be non-negative")
    return p.eta_s * p.A_s * I_G


@dataclass
class IrradianceTrace:
    t_s: np.ndarray
    h_rad: np.ndarray
    I_N: np.ndarray
    I_D: np.ndarray
    I_G: np.ndarray
    P_s: np.ndarray

    def columns(self):
        return {k: getattr(self, k) for k in ("t_s", "h_rad", "I_N", "I_D", "I_G", "P_s")}


def simulate_irradiance(site: SolarSite, p: RadiationParams, pv: PvParams, t_s, okta, stream, t_start=0.0):
    """Irradiance and PV power along a cloud trace.

    ``t_s`` are seconds since the simulation start, which is ``t_start``
    seconds after midnight of ``site.day_of_year``. The day index advances at
    each midnight. Noise increments come from ``stream`` (one pair per sample).
    """
    t_s = np.asarray(t_s, dtype=float)
    okta = np.asarray(okta, dtype=float)
    dt = float(t_s[1] - t_s[0]) if len(t_s) > 1 else 0.0
    noise_dt = p.noise_dt(dt)
    draws = stream.normal(size=(len(t_s), 2)) * math.sqrt(noise_dt) if dt > 0 else np.zeros((len(t_s), 2))
    h = np.empty(len(t_s))
    I_N = np.empty(len(t_s))
    I_D = np.empty(len(t_s))
    for i, t in enumerate(t_s):
        clock = t_start + t
        day_offset, tod = divmod(clock, 86400.0)
        d_t = (site.day_of_year - 1 + int(day_offset)) % 365 + 1
        h[i] = sun_elevation(site, tod, day_of_year=d_t)
        I_N[i] = direct_radiation(okta[i], h[i], d_t, p, draws[i, 0])
        I_D[i] = diffuse_radiation(okta[i], h[i], d_t, p, draws[i, 1])
    I_G = global_radiation(I_N, I_D, h)
    return IrradianceTrace(t_s=t_s, h_rad=h, I_N=I_N, I_D=I_D, I_G=I_G, P_s=pv_power(I_G, pv))
