"""Problem container for smooth equality- and bound-constrained NLPs.

    minimise    f(x)
    subject to  c(x) = 0,   x_lower <= x <= x_upper

All callbacks work in physical units. ``x_scale``, ``c_scale`` and
``f_scale`` describe how a solver should normalise the problem; a variable is
seen by the solver as x / x_scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


@dataclass
class NlpProblem:
    n: int
    m: int
    x_lower: np.ndarray
    x_upper: np.ndarray
    x0: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    constraints: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], sp.spmatrix]
    #: hessian(x, lam, obj_factor) -> Hessian of obj_factor*f + lam.c (full, symmetric)
    hessian: Callable[[np.ndarray, np.ndarray, float], sp.spmatrix]
    x_scale: Optional[np.ndarray] = None
    c_scale: Optional[np.ndarray] = None
    f_scale: float = 1.0
    var_names: Optional[list] = None
    con_names: Optional[list] = None

    def __post_init__(self):
        self.x_lower = np.asarray(self.x_lower, dtype=float)
        self.x_upper = np.asarray(self.x_upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        for name, arr in (("x_lower", self.x_lower), ("x_upper", self.x_upper), ("x0", self.x0)):
            if arr.shape != (self.n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({self.n},)")
        if np.any(self.x_lower > self.x_upper):
            bad = int(np.argmax(self.x_lower > self.x_upper))
            raise ValueError(f"infeasible bounds on variable {self._var(bad)}")
        self.x_scale = np.ones(self.n) if self.x_scale is None else np.asarray(self.x_scale, dtype=float)
        self.c_scale = np.ones(self.m) if self.c_scale is None else np.asarray(self.c_scale, dtype=float)
        if np.any(self.x_scale <= 0) or np.any(self.c_scale <= 0):
            raise ValueError("scales must be positive")

    def _var(self, i):
        return self.var_names[i] if self.var_names else str(i)


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    lam: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    status: str
    message: str
    iterations: int
    #: max |c_scale * c(x)|
    constraint_violation: float
    #: max |grad L| in the solver's scaled space
    kkt_residual: float
    complementarity: float
    log: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == "converged"


class SolverError(RuntimeError):
    """Raised when the solver cannot continue, e.g. on non-finite callbacks."""


def check_derivatives(problem: NlpProblem, x=None, lam=None, h: float = 1e-6, seed: int = 0):
    """Compare analytic derivatives against central differences.

    Steps are relative to ``x_scale``. Returns a dict of maximum absolute
    errors, each normalised by max(1, |reference|).
    """
    rng = np.random.default_rng(seed)
    x = problem.x0.copy() if x is None else np.asarray(x, dtype=float)
    lam = rng.standard_normal(problem.m) if lam is None else np.asarray(lam, dtype=float)
    steps = h * problem.x_scale
    g = problem.gradient(x)
    J = sp.csr_matrix(problem.jacobian(x)).toarray()
    H = sp.csr_matrix(problem.hessian(x, lam, 1.0)).toarray()
    g_fd = np.empty(problem.n)
    J_fd = np.empty((problem.m, problem.n))
    H_fd = np.empty((problem.n, problem.n))

    def grad_lag(z):
        return problem.gradient(z) + sp.csr_matrix(problem.jacobian(z)).T @ lam

    for i in range(problem.n):
        e = np.zeros(problem.n)
        e[i] = steps[i]
        g_fd[i] = (problem.objective(x + e) - problem.objective(x - e)) / (2 * steps[i])
        J_fd[:, i] = (problem.constraints(x + e) - problem.constraints(x - e)) / (2 * steps[i])
        H_fd[:, i] = (grad_lag(x + e) - grad_lag(x - e)) / (2 * steps[i])

    def err(a, b):
        if a.size == 0:
            return 0.0
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))

    return {"gradient": err(g, g_fd), "jacobian": err(J, J_fd), "hessian": err(H, H_fd)}
