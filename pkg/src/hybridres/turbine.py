"""Wind turbine power extraction and stationary optimal operation.

The rotor power coefficient is held as a table over (tip speed ratio, pitch)
and bilinearly interpolated. ``optimize_stationary`` solves the per-wind-speed
box-constrained maximisation of C_P by a dense grid scan followed by local
coordinate refinement.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

BETZ = 16.0 / 27.0
RPM = 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class TurbineParams:
    rho: float = 1.225
    R: float = 62.94
    eta_g: float = 0.944
    v_cut_in: float = 3.0
    v_rated: float = 11.4
    v_cut_out: float = 25.0
    omega_min: float = 6.9 * RPM
    omega_max: float = 12.1 * RPM
    theta_min: float = -5.0
    theta_max: float = 25.0
    rated_power: float = 5.0e6

    def __post_init__(self):
        if not self.v_cut_in < self.v_rated < self.v_cut_out:
            raise ValueError("need v_cut_in < v_rated < v_cut_out")
        if not 0 < self.omega_min < self.omega_max:
            raise ValueError("need 0 < omega_min < omega_max")
        if not self.theta_min < self.theta_max:
            raise ValueError("need theta_min < theta_max")
        if not (self.rho > 0 and self.R > 0 and 0 < self.eta_g <= 1):
            raise ValueError("rho, R must be positive and eta_g in (0, 1]")

    def lambda_bounds(self, v: float) -> tuple[float, float]:
        return self.R * self.omega_min / v, self.R * self.omega_max / v


@dataclass(frozen=True)
class CpSurface:
    """Tabulated C_P over ascending ``lambda_grid`` x ``theta_grid`` (deg)."""

    lambda_grid: np.ndarray
    theta_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambda_grid, dtype=float)
        th = np.asarray(self.theta_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if lam.ndim != 1 or th.ndim != 1 or len(lam) < 2 or len(th) < 2:
            raise ValueError("C_P grid needs at least 2 points per axis")
        if np.any(np.diff(lam) <= 0) or np.any(np.diff(th) <= 0):
            raise ValueError("C_P grids must be strictly ascending")
        if vals.shape != (len(lam), len(th)):
            raise ValueError(f"C_P values shape {vals.shape} != {(len(lam), len(th))}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("C_P values must be finite")
        if vals.max() > BETZ:
            raise ValueError(f"C_P table exceeds the Betz limit: max {vals.max():.4f}")
        for name, arr in (("lambda_grid", lam), ("theta_grid", th), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def max_value(self) -> float:
        return float(np.maximum(self.values, 0.0).max())


def analytic_cp(lam, theta, c=(0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068)):
    """Parametric HAWT power coefficient, pitch in degrees, floored at 0."""
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    inv_li = 1.0 / (lam + 0.08 * theta) - 0.035 / (theta**3 + 1.0)
    cp = c[0] * (c[1] * inv_li - c[2] * theta - c[3]) * np.exp(-c[4] * inv_li) + c[5] * lam
    return np.maximum(cp, 0.0)


def default_cp_surface(n_lambda: int = 261, n_theta: int = 101) -> CpSurface:
    """The analytic surface sampled on lambda in [0.5, 26.5], pitch in [0, 25] deg.

    The parametric form is singular at pitch = -1 deg and exceeds the Betz
    limit for negative pitch, so the table stops at 0 deg; queries below the
    grid clamp to the 0 deg column.
    """
    lam = np.linspace(0.5, 26.5, n_lambda)
    theta = np.linspace(0.0, 25.0, n_theta)
    L, T = np.meshgrid(lam, theta, indexing="ij")
    return CpSurface(lam, theta, analytic_cp(L, T))


def load_cp_csv(path) -> CpSurface:
    """Read a C_P table: first row is a blank cell then the lambda grid, every
    following row is a pitch value then that pitch's C_P row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if len(rows) < 3:
        raise ValueError(f"{path}: C_P table needs a header and at least 2 rows")
    lam = np.array([float(x) for x in rows[0][1:]])
    theta = np.array([float(r[0]) for r in rows[1:]])
    body = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return CpSurface(lam, theta, body.T)


def write_cp_csv(surface: CpSurface, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + [repr(float(x)) for x in surface.lambda_grid])
        for j, th in enumerate(surface.theta_grid):
            w.writerow([repr(float(th))] + [repr(float(x)) for x in surface.values[:, j]])


def cp_lookup(s: CpSurface, lam, theta):
    """Bilinear interpolation of C_P, clamped to the grid, floored at 0."""
    lam_g, th_g = s.lambda_grid, s.theta_grid
    x = np.clip(np.asarray(lam, dtype=float), lam_g[0], lam_g[-1])
    y = np.clip(np.asarray(theta, dtype=float), th_g[0], th_g[-1])
    i = np.clip(np.searchsorted(lam_g, x, side="right") - 1, 0, len(lam_g) - 2)
    j = np.clip(np.searchsorted(th_g, y, side="right") - 1, 0, len(th_g) - 2)
    tx = (x - lam_g[i]) / (lam_g[i + 1] - lam_g[i])
    ty = (y - th_g[j]) / (th_g[j + 1] - th_g[j])
    v = s.values
    out = (
        (1 - tx) * (1 - ty) * v[i, j]
        + tx * (1 - ty) * v[i + 1, j]
        + (1 - tx) * ty * v[i, j + 1]
        + tx * ty * v[i + 1, j + 1]
    )
    out = np.maximum(out, 0.0)
    return out.item() if out.ndim == 0 else out


def available_power(v, p: TurbineParams):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("wind speed must be non-negative")
    out = 0.5 * p.rho * math.pi * p.R**2 * v**3
    return out.item() if out.ndim == 0 else out


def tip_speed_ratio(omega_r, v, R):
    if np.any(np.asarray(v) <= 0):
        raise ValueError("tip speed ratio is undefined for v <= 0")
    return R * omega_r / v


@dataclass(frozen=True)
class OperatingPoint:
    v: float
    theta_star: float
    lambda_star: float
    cp_star: float
    omega_star: float
    P_r: float
    P_g: float
    Q_r: float

    @classmethod
    def idle(cls, v: float) -> "OperatingPoint":
        return cls(v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _refine(s: CpSurface, lam0, th0, lam_box, th_box, sweeps=6, n=41):
    """Alternating 1-D scans around (lam0, th0), shrinking the window each sweep."""
    lam, th = lam0, th0
    best = cp_lookup(s, lam, th)
    w_lam = (lam_box[1] - lam_box[0]) / 100.0
    w_th = (th_box[1] - th_box[0]) / 100.0
    for _ in range(sweeps):
        cand = np.clip(np.linspace(lam - w_lam, lam + w_lam, n), *lam_box)
        vals = cp_lookup(s, cand, th)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, lam = float(vals[k]), float(cand[k])
        cand = np.clip(np.linspace(th - w_th, th + w_th, n), *th_box)
        vals = cp_lookup(s, lam, cand)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, th = float(vals[k]), float(cand[k])
        w_lam /= 4.0
        w_th /= 4.0
    return lam, th, best


def optimize_stationary(v: float, p: TurbineParams, s: CpSurface, n_grid: int = 201) -> OperatingPoint:
    """Maximise C_P over the pitch box and the speed-dependent lambda box."""
    if not p.v_cut_in <= v <= p.v_cut_out:
        return OperatingPoint.idle(v)
    lam_box = p.lambda_bounds(v)
    th_box = (p.theta_min, p.theta_max)
    lam_g = np.linspace(*lam_box, n_grid)
    th_g = np.union1d(np.linspace(*th_box, n_grid), [min(max(0.0, th_box[0]), th_box[1])])
    L, T = np.meshgrid(lam_g, th_g, indexing="ij")
    C = cp_lookup(s, L, T)
    # ties (flat regions from grid clamping) resolve to the smallest |pitch|
    ties = np.flatnonzero(C.ravel() >= C.max() - 1e-12)
    k = np.unravel_index(ties[np.argmin(np.abs(T.ravel()[ties]))], C.shape)
    lam, th, cp = _refine(s, float(L[k]), float(T[k]), lam_box, th_box)
    P_r = available_power(v, p) * cp
    P_g = min(p.eta_g * P_r, p.rated_power)
    omega = lam * v / p.R
    Q_r = P_r / omega if omega > 0 else 0.0
    return OperatingPoint(v, th, lam, cp, omega, P_r, P_g, Q_r)


def power_curve(p: TurbineParams, s: CpSurface, v_grid) -> list[OperatingPoint]:
    v_grid = np.asarray(v_grid, dtype=float)
    if np.any(np.diff(v_grid) < 0):
        raise ValueError("v_grid must be ascending")
    return [optimize_stationary(float(v), p, s) for v in v_grid]


class PowerCurve:
    """Generated power as a function of wind speed, tabulated once.

    Interpolates P_g linearly on a fine grid between cut-in and cut-out and
    returns 0 outside.
    """

    def __init__(self, p: TurbineParams, s: CpSurface, n: int = 221):
        self.params = p
        self.v = np.linspace(p.v_cut_in, p.v_cut_out, n)
        self.P_g = np.array([op.P_g for op in power_curve(p, s, self.v)])

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.params.v_cut_in) & (v <= self.params.v_cut_out)
        return np.where(inside, np.interp(v, self.v, self.P_g), 0.0)


POWER_CURVE_HEADER = ("v", "theta_star", "lambda_star", "cp_star", "omega_star_rpm", "P_g_W")


def power_curve_rows(points):
    for op in points:
        yield (op.v, op.theta_star, op.lambda_star, op.cp_star, op.omega_star / RPM, op.P_g)
