"""Primal-dual interior-point method for :class:`~hybridres.nlp.NlpProblem`.

Bounds are handled by a logarithmic barrier with primal-dual bound
multipliers; equality constraints enter the Newton system directly. The
search direction comes from the sparse augmented (KKT) system, globalised by
backtracking on an l1 exact-penalty merit function with fraction-to-boundary
safeguards. The barrier parameter follows the monotone Fiacco-McCormick rule.

Correct inertia of the KKT matrix is enforced without an inertia-revealing
factorisation: the (1,1) block is shifted row-wise until it is strictly
diagonally dominant, hence positive definite, so the Newton step is a
descent direction for the merit function whenever the constraint Jacobian has
full row rank. Rank deficiency is absorbed by a small negative (2,2) block.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .nlp import NlpProblem, NlpSolution, SolverError

log = logging.getLogger(__name__)


@dataclass
class IpmOptions:
    tol: float = 1e-8
    constr_viol_tol: float = 1e-8
    dual_inf_tol: float = 1e-6
    compl_inf_tol: float = 1e-6
    max_iter: int = 300
    mu_init: float = 0.1
    kappa_eps: float = 10.0
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    tau_min: float = 0.99
    bound_push: float = 1e-2
    bound_frac: float = 1e-2
    s_max: float = 100.0
    armijo: float = 1e-4
    max_backtracks: int = 40
    obj_scale_target: float = 100.0
    delta_c: float = 1e-9
    #: bounds are widened by this fraction (of max(1, |bound|)) so the strict interior is never empty
    bound_relax: float = 1e-8
    verbose: bool = False


class _Scaled:
    """The problem as the solver sees it: y = x / x_scale."""

    def __init__(self, p: NlpProblem, f_scale: float):
        self.p = p
        self.dx = p.x_scale
        self.dc = p.c_scale
        self.fs = f_scale
        self.Dx = sp.diags(self.dx)
        self.Dc = sp.diags(self.dc)
        self.lower = p.x_lower / self.dx
        self.upper = p.x_upper / self.dx

    def x(self, y):
        return y * self.dx

    def f(self, y):
        return self.fs * self.p.objective(self.x(y))

    def g(self, y):
        return self.fs * self.dx * self.p.gradient(self.x(y))

    def c(self, y):
        return self.dc * self.p.constraints(self.x(y))

    def J(self, y):
        return sp.csr_matrix(self.Dc @ sp.csr_matrix(self.p.jacobian(self.x(y))) @ self.Dx)

    def H(self, y, lam):
        raw = self.p.hessian(self.x(y), self.dc * lam, self.fs)
        return sp.csr_matrix(self.Dx @ sp.csr_matrix(raw) @ self.Dx)


def _finite(name, value):
    arr = value.data if sp.issparse(value) else np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise SolverError(f"non-finite values in {name}")
    return value


def _without_fixed(p: NlpProblem):
    """Reduced problem over the variables whose bounds do not coincide.

    Fixed variables become parameters, which keeps the bound-multiplier
    system well posed when an equality row pins variables at their bounds.
    Returns (reduced problem, free mask, lifting function).
    """
    free = p.x_lower < p.x_upper
    base = np.where(free, p.x0, p.x_lower)
    idx = np.flatnonzero(free)

    def lift(y):
        x = base.copy()
        x[idx] = y
        return x

    reduced = NlpProblem(
        n=len(idx), m=p.m,
        x_lower=p.x_lower[idx], x_upper=p.x_upper[idx], x0=p.x0[idx],
        objective=lambda y: p.objective(lift(y)),
        gradient=lambda y: p.gradient(lift(y))[idx],
        constraints=lambda y: p.constraints(lift(y)),
        jacobian=lambda y: sp.csc_matrix(p.jacobian(lift(y)))[:, idx],
        hessian=lambda y, lam, of: sp.csr_matrix(p.hessian(lift(y), lam, of))[idx][:, idx],
        x_scale=p.x_scale[idx], c_scale=p.c_scale, f_scale=p.f_scale,
        var_names=[p.var_names[i] for i in idx] if p.var_names else None,
        con_names=p.con_names,
    )
    return reduced, free, lift


def _push_inside(y, lo, hi, opts: IpmOptions):
    y = y.copy()
    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)
    pl = opts.bound_push * np.maximum(1.0, np.abs(np.where(has_lo, lo, 0.0)))
    pu = opts.bound_push * np.maximum(1.0, np.abs(np.where(has_hi, hi, 0.0)))
    both = has_lo & has_hi
    width = np.where(both, hi - lo, np.inf)
    pl = np.minimum(pl, opts.bound_frac * width)
    pu = np.minimum(pu, opts.bound_frac * width)
    y = np.where(has_lo, np.maximum(y, lo + pl), y)
    y = np.where(has_hi, np.minimum(y, hi - pu), y)
    return y


def _fraction_to_boundary(v, dv, tau):
    """Largest alpha in (0, 1] with v + alpha*dv >= (1 - tau) v for v > 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve(problem: NlpProblem, options: IpmOptions | None = None) -> NlpSolution:
    """Solve ``problem`` and return the final iterate with its residuals.

    Raises :class:`SolverError` if a callback returns NaN or inf. Hitting
    ``max_iter`` is not an error: the returned solution has status
    ``"max_iter"`` and carries the last iterate's residuals.
    """
    opts = options or IpmOptions()
    if np.any(problem.x_lower == problem.x_upper):
        return _solve_with_fixed(problem, opts)
    n, m = problem.n, problem.m
    probe = _Scaled(problem, 1.0)
    lo = probe.lower - opts.bound_relax * np.maximum(1.0, np.abs(probe.lower))
    hi = probe.upper + opts.bound_relax * np.maximum(1.0, np.abs(probe.upper))
    y = _push_inside(problem.x0 / probe.dx, lo, hi, opts)
    g0 = _finite("objective gradient", probe.g(y))
    gmax = float(np.max(np.abs(g0))) if n else 0.0
    f_scale = problem.f_scale * (min(1.0, opts.obj_scale_target / gmax) if gmax > 0 else 1.0)
    P = _Scaled(problem, f_scale)

    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)
    lo0 = np.where(has_lo, lo, 0.0)
    hi0 = np.where(has_hi, hi, 0.0)
    zl = np.where(has_lo, 1.0, 0.0)
    zu = np.where(has_hi, 1.0, 0.0)
    mu = opts.mu_init
    nu = 1.0
    history = []

    def slacks(y):
        return np.where(has_lo, y - lo0, 1.0), np.where(has_hi, hi0 - y, 1.0)

    def barrier_value(y, f, mu):
        sl, su = slacks(y)
        sl, su = sl[has_lo], su[has_hi]
        if np.any(sl <= 0) or np.any(su <= 0):
            # round-off put the trial point on a bound
            return math.inf
        return f - mu * np.sum(np.log(sl)) - mu * np.sum(np.log(su))

    def evaluate(y):
        f = _finite("objective", P.f(y))
        c = _finite("constraints", P.c(y))
        return f, c

    f, c = evaluate(y)
    g = _finite("objective gradient", P.g(y))
    J = _finite("constraint jacobian", P.J(y))

    lam = np.zeros(m)
    if m:
        # least-squares multiplier estimate
        K = sp.bmat([[sp.identity(n), J.T], [J, None]], format="csc")
        try:
            sol = splu(K).solve(np.concatenate([-(g - zl + zu), np.zeros(m)]))
            if np.all(np.isfinite(sol)) and np.max(np.abs(sol[n:])) <= 1e3:
                lam = sol[n:]
        except RuntimeError:
            pass

    def errors(y, g, J, c, lam, zl, zu, mu):
        sl, su = slacks(y)
        rd = g + (J.T @ lam if m else 0.0) - zl + zu
        dual = float(np.max(np.abs(rd))) if n else 0.0
        primal = float(np.max(np.abs(c))) if m else 0.0
        comp_l = np.abs(sl * zl - mu)[has_lo]
        comp_u = np.abs(su * zu - mu)[has_hi]
        comp = float(max(comp_l.max(initial=0.0), comp_u.max(initial=0.0)))
        z_norm = np.sum(np.abs(zl)) + np.sum(np.abs(zu))
        s_d = max(opts.s_max, (np.sum(np.abs(lam)) + z_norm) / max(1, m + n)) / opts.s_max
        s_c = max(opts.s_max, z_norm / max(1, n)) / opts.s_max
        return max(dual / s_d, primal, comp / s_c), primal, dual, comp

    status, message = "max_iter", f"no convergence in {opts.max_iter} iterations"
    it = 0
    alpha = 0.0
    for it in range(opts.max_iter + 1):
        err0, primal, dual, comp = errors(y, g, J, c, lam, zl, zu, 0.0)
        history.append(
            {"iteration": it, "objective": f / f_scale, "primal_inf": primal, "dual_inf": dual,
             "compl": comp, "mu": mu, "alpha": alpha}
        )
        if opts.verbose:
            log.info("%4d  f=% .8e  pr=%.2e  du=%.2e  co=%.2e  mu=%.1e  a=%.2e",
                     it, f / f_scale, primal, dual, comp, mu, alpha)
        if (err0 <= opts.tol and primal <= opts.constr_viol_tol and dual <= opts.dual_inf_tol
                and comp <= opts.compl_inf_tol):
            status, message = "converged", "optimal point found"
            break
        if it == opts.max_iter:
            break

        # barrier parameter update
        while True:
            err_mu = errors(y, g, J, c, lam, zl, zu, mu)[0]
            if err_mu > opts.kappa_eps * mu or mu <= opts.tol / 10.0:
                break
            mu = max(opts.tol / 10.0, min(opts.kappa_mu * mu, mu**opts.theta_mu))
            nu = 1.0
        tau = max(opts.tau_min, 1.0 - mu)

        sl, su = slacks(y)
        sigma = np.where(has_lo, zl / sl, 0.0) + np.where(has_hi, zu / su, 0.0)
        W = _finite("hessian", P.H(y, lam))
        Hm = sp.csr_matrix(W + sp.diags(sigma))
        # row-wise shift to strict diagonal dominance
        absH = abs(Hm)
        off = np.asarray(absH.sum(axis=1)).ravel() - np.abs(Hm.diagonal())
        margin = Hm.diagonal() - off
        floor = 1e-10 * np.maximum(1.0, sigma)
        shift = np.where(margin < floor, floor - margin, 0.0)
        Hm = Hm + sp.diags(shift)

        grad_phi = g - np.where(has_lo, mu / sl, 0.0) + np.where(has_hi, mu / su, 0.0)
        rhs = np.concatenate([-(grad_phi + (J.T @ lam if m else 0.0)), -c])
        delta_c = 0.0
        for attempt in range(8):
            K = sp.bmat([[Hm, J.T], [J, -delta_c * sp.identity(m) if m else None]], format="csc") if m \
                else sp.csc_matrix(Hm)
            try:
                sol = splu(K).solve(rhs)
                if np.all(np.isfinite(sol)):
                    break
            except RuntimeError:
                pass
            delta_c = opts.delta_c if delta_c == 0.0 else delta_c * 100.0
        else:
            raise SolverError("KKT system is singular even after regularisation")
        dy, dlam = sol[:n], sol[n:]
        dzl = np.where(has_lo, mu / sl - zl - (zl / sl) * dy, 0.0)
        dzu = np.where(has_hi, mu / su - zu + (zu / su) * dy, 0.0)

        a_max = min(
            _fraction_to_boundary(sl[has_lo], dy[has_lo], tau),
            _fraction_to_boundary(su[has_hi], -dy[has_hi], tau),
        )
        a_z = min(
            _fraction_to_boundary(zl[has_lo], dzl[has_lo], tau),
            _fraction_to_boundary(zu[has_hi], dzu[has_hi], tau),
        )

        c_norm = float(np.sum(np.abs(c)))
        lam_trial = lam + dlam
        nu_req = float(np.max(np.abs(lam_trial))) if m else 0.0
        if nu < 1.1 * nu_req:
            nu = 1.5 * nu_req + 1.0
        merit0 = barrier_value(y, f, mu) + nu * c_norm
        slope = float(grad_phi @ dy) - nu * c_norm
        alpha = a_max
        accepted = False
        for _ in range(opts.max_backtracks):
            y_t = y + alpha * dy
            f_t, c_t = evaluate(y_t)
            merit_t = barrier_value(y_t, f_t, mu) + nu * float(np.sum(np.abs(c_t)))
            if merit_t <= merit0 + opts.armijo * alpha * min(slope, 0.0) or (slope >= 0 and merit_t <= merit0):
                accepted = True
                break
            # second-order correction on the first trial, against constraint curvature
            if alpha == a_max and m:
                rhs_soc = np.concatenate([rhs[:n], -(alpha * c + c_t)])
                try:
                    d_soc = splu(K).solve(rhs_soc)[:n]
                    sl_, su_ = slacks(y)
                    a_soc = min(
                        _fraction_to_boundary(sl_[has_lo], d_soc[has_lo], tau),
                        _fraction_to_boundary(su_[has_hi], -d_soc[has_hi], tau),
                    )
                    if a_soc >= 1.0 - 1e-12:
                        y_s = y + d_soc
                        f_s, c_s = evaluate(y_s)
                        merit_s = barrier_value(y_s, f_s, mu) + nu * float(np.sum(np.abs(c_s)))
                        if merit_s <= merit0 + opts.armijo * alpha * min(slope, 0.0):
                            y_t, f_t, c_t = y_s, f_s, c_s
                            dy = d_soc / alpha
                            accepted = True
                            break
                except RuntimeError:
                    pass
            alpha *= 0.5
        if not accepted:
            # accept the shortest trial rather than stall; the barrier keeps it interior
            log.debug("line search failed at iteration %d", it)

        y = y_t
        f, c = f_t, c_t
        lam = lam + alpha * dlam
        zl = zl + a_z * dzl
        zu = zu + a_z * dzu
        sl, su = slacks(y)
        # keep bound multipliers consistent with the barrier
        kap = 1e10
        zl = np.where(has_lo, np.clip(zl, mu / (kap * sl), kap * mu / sl), 0.0)
        zu = np.where(has_hi, np.clip(zu, mu / (kap * su), kap * mu / su), 0.0)
        g = _finite("objective gradient", P.g(y))
        J = _finite("constraint jacobian", P.J(y))

    err0, primal, dual, comp = errors(y, g, J, c, lam, zl, zu, 0.0)
    x = P.x(y)
    raw_c = problem.constraints(x) if m else np.zeros(0)
    return NlpSolution(
        x=x,
        objective=float(problem.objective(x)),
        lam=lam * problem.c_scale / f_scale if m else lam,
        z_lower=zl / (f_scale * problem.x_scale),
        z_upper=zu / (f_scale * problem.x_scale),
        status=status,
        message=message,
        iterations=it,
        constraint_violation=float(np.max(np.abs(problem.c_scale * raw_c))) if m else 0.0,
        kkt_residual=dual,
        complementarity=comp,
        log=history,
    )


def _solve_with_fixed(problem: NlpProblem, opts: IpmOptions) -> NlpSolution:
    reduced, free, lift = _without_fixed(problem)
    sol = solve(reduced, opts)
    x = lift(sol.x)
    zl = np.zeros(problem.n)
    zu = np.zeros(problem.n)
    zl[free], zu[free] = sol.z_lower, sol.z_upper
    # multipliers of the pinned variables absorb the remaining dual residual
    if problem.n:
        rd = problem.gradient(x)
        if problem.m:
            rd = rd + sp.csr_matrix(problem.jacobian(x)).T @ sol.lam
        zl[~free] = np.maximum(rd[~free], 0.0)
        zu[~free] = np.maximum(-rd[~free], 0.0)
    return replace(sol, x=x, objective=float(problem.objective(x)), z_lower=zl, z_upper=zu)
