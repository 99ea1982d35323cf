# core/ocp_solver.py

import os
import sys
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
import scipy.sparse.linalg as spla

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.fem import (EllipticCoeffs, P0Field, P1Field, StateOperator, assemble_mass,
                      element_average, load_from_values, load_vector, solve_spd, values_at)
from core.quadrature import EDGE_MIDPOINT
from core.scalar_reg import (RegParams, core_support_mask, dc_argmin, j_func, jump_band_mask,
                             penalty_density, penalty_derivative, penalty_second_derivative)
from core.utils.errors import ConfigError, MeshError, SolverError
from utils.logger import log_error, log_event, log_metrics

# cost-increase slack and damping guard
SLACK_FACTOR = 10.0
MAX_HALVINGS = 6
# budget multiplier for the Picard fallback of the inner solve
PICARD_FACTOR = 20

ZERO, LOWER, UPPER, ROOT = 0, 1, 2, 3


@dataclass(frozen=True)
class ProblemSpec:
    """Model data: regularisation parameters, target y_d, source f, elliptic operator"""
    params: RegParams = field(default_factory=RegParams)
    yd: Any = None
    f: Any = None
    coeffs: Optional[EllipticCoeffs] = None
    yd_label: str = ""
    f_label: str = ""


@dataclass(frozen=True)
class SolveOptions:
    tol_outer: float = 1e-9
    tol_inner: float = 1e-10
    max_outer: int = 200
    max_inner: int = 50
    damping: float = 1.0
    initial: Any = None
    inner_method: str = "ssn"
    polish: bool = True
    switch_tol: Optional[float] = None
    solve_method: str = "lu"

    def __post_init__(self):
        for name in ("tol_outer", "tol_inner"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("max_outer", "max_inner"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if self.inner_method not in ("ssn", "picard"):
            raise ConfigError(f"inner_method must be 'ssn' or 'picard', got {self.inner_method!r}")
        if self.switch_tol is not None and not self.switch_tol > 0:
            raise ConfigError(f"switch_tol must be positive, got {self.switch_tol}")
        if self.solve_method not in ("lu", "cg"):
            raise ConfigError(f"solve_method must be 'lu' or 'cg', got {self.solve_method!r}")


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Converged discrete solution with multipliers and iteration statistics"""
    u: P0Field
    y: P1Field
    phi: P1Field
    w: P0Field
    zeta: P0Field
    lambda_a: P0Field
    lambda_b: P0Field
    cost_history: Tuple[float, ...]
    outer_iterations: int
    total_inner_iterations: int
    kkt_residual: float
    support_element_count: int
    polish_iterations: int = 0
    fixed_point_defect: float = float("nan")
    converged: bool = True

    @property
    def mesh(self):
        return self.u.mesh

    @property
    def support_fraction(self):
        return self.support_element_count / self.mesh.n_triangles

    @property
    def cost(self):
        return self.cost_history[-1]

    def to_frame(self):
        m = self.mesh
        return pd.DataFrame({
            "element": np.arange(m.n_triangles),
            "barycenter_x": m.barycenters[:, 0],
            "barycenter_y": m.barycenters[:, 1],
            "u": self.u.values,
            "w": self.w.values,
            "zeta": self.zeta.values,
            "lambda_a": self.lambda_a.values,
            "lambda_b": self.lambda_b.values,
            "phi_bar": element_average(self.phi).values,
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def summary(self):
        return {
            "cost": self.cost,
            "outer_iterations": self.outer_iterations,
            "polish_iterations": self.polish_iterations,
            "total_inner_iterations": self.total_inner_iterations,
            "kkt_residual": self.kkt_residual,
            "fixed_point_defect": self.fixed_point_defect,
            "support_element_count": self.support_element_count,
            "support_fraction": self.support_fraction,
            "converged": self.converged,
        }


def _p0_load_matrix(m):
    """B[i, T] = |T|/3 for interior vertices i of T"""
    rows = m.dof_index[m.triangles].ravel()
    cols = np.repeat(np.arange(m.n_triangles), 3)
    data = np.repeat(m.areas / 3.0, 3)
    keep = rows >= 0
    return sp.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(m.n_interior, m.n_triangles))


class DiscreteProblem:
    """Reduced discrete problem in the control u (one value per element).

    phi_bar(u) = H u + c is the element mean of the adjoint; D H is symmetric
    positive semidefinite for the area weights D, so the reduced Hessian is
    handled in the area-weighted inner product.
    """

    def __init__(self, spec, mesh, solve_method="lu"):
        self.spec = spec
        self.mesh = mesh
        self.params = spec.params
        self.areas = np.asarray(mesh.areas)
        self.state_op = StateOperator(mesh, spec.coeffs, method=solve_method)
        interior = mesh.interior
        self.mass = assemble_mass(mesh)[interior][:, interior].tocsr()
        self.B = _p0_load_matrix(mesh)
        self.yd_mid = values_at(spec.yd, mesh, EDGE_MIDPOINT)
        self.r_d = load_from_values(mesh, self.yd_mid)
        self.y_f = self.state_op.solve(load_vector(mesh, spec.f))
        self.c = self.element_mean(self.adjoint(self.y_f))

    # --- building blocks ---

    def element_mean(self, v):
        return (self.B.T @ v) / self.areas

    def state(self, u):
        return self.y_f + self.state_op.solve(self.B @ u)

    def adjoint(self, y):
        return self.state_op.solve(self.mass @ y - self.r_d)

    def phi_bar(self, u):
        return self.element_mean(self.adjoint(self.state(u)))

    def apply_h(self, v):
        """Linear part of u -> phi_bar(u)"""
        return self.element_mean(self.state_op.solve(self.mass @ self.state_op.solve(self.B @ v)))

    def full(self, v):
        coeff = np.zeros(self.mesh.n_vertices)
        coeff[self.mesh.interior] = v
        return coeff

    def clip(self, u):
        return np.clip(u, self.params.u_a, self.params.u_b)

    def norm(self, v):
        return float(np.sqrt(np.sum(self.areas * v * v)))

    # --- cost ---

    def tracking(self, y):
        mids = self.full(y)[self.mesh.triangles] @ EDGE_MIDPOINT.points.T
        return 0.5 * float(np.sum(self.areas * (((mids - self.yd_mid) ** 2) @ EDGE_MIDPOINT.weights)))

    def cost(self, u, y=None):
        p = self.params
        y = self.state(u) if y is None else y
        reg = 0.5 * p.alpha * np.sum(self.areas * u * u)
        pen = p.beta * np.sum(self.areas * penalty_density(u, p)) if p.beta > 0 else 0.0
        return float(self.tracking(y) + reg + pen)

    # --- linear systems on element subsets ---

    def solve_subset(self, subset, diag, rhs, tol=1e-12):
        """Solve (diag + H)_SS x = rhs on the elements in `subset`, other entries zero"""
        idx = np.flatnonzero(subset)
        d_s = self.areas[idx]
        n = len(idx)

        def matvec(v):
            full = np.zeros(self.mesh.n_triangles)
            full[idx] = v
            return diag * d_s * v + d_s * self.apply_h(full)[idx]

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        scale = diag * d_s
        precond = lambda r: r / scale
        try:
            return solve_spd(op, d_s * rhs, tol=tol, preconditioner=precond)
        except SolverError as e:
            log_event("subset_cg_retry", {"size": n, "residual": e.residual}, "WARNING")
            return solve_spd(op, d_s * rhs, tol=tol, preconditioner=precond, maxiter=4 * n + 100)

    # --- inner convex L1 problem ---

    def prox_map(self, g_hat, pbar):
        p = self.params
        tau = p.beta * p.delta_gamma
        z = p.beta * g_hat - pbar
        shrunk = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
        return self.clip(shrunk / p.alpha)

    def inner_residual(self, u, g_hat, pbar):
        return self.norm(u - self.prox_map(g_hat, pbar))

    def ssn_step(self, g_hat, pbar):
        """Active-set Newton step for u = P(soft(beta g - phi_bar(u), beta delta) / alpha)"""
        p = self.params
        tau = p.beta * p.delta_gamma
        z = p.beta * g_hat - pbar
        dead = np.abs(z) <= tau
        v = (z - tau * np.sign(z)) / p.alpha
        upper = ~dead & (v >= p.u_b)
        lower = ~dead & (v <= p.u_a)
        free = ~(dead | upper | lower)

        u = np.zeros_like(pbar)
        u[upper] = p.u_b
        u[lower] = p.u_a
        if np.any(free):
            rhs = (p.beta * g_hat - tau * np.sign(z) - self.c - self.apply_h(u))[free]
            u[free] = self.solve_subset(free, p.alpha, rhs)
        return self.clip(u), {"dead": int(dead.sum()), "free": int(free.sum()),
                              "upper": int(upper.sum()), "lower": int(lower.sum())}

    def inner_solve(self, g_hat, u_start, opts):
        """Minimise the auxiliary L1-sparse problem; returns (u, iterations, trace)"""
        method = opts.inner_method
        limit = opts.max_inner if method == "ssn" else PICARD_FACTOR * opts.max_inner
        u = self.clip(np.asarray(u_start, dtype=float))
        pbar = self.phi_bar(u)
        res = self.inner_residual(u, g_hat, pbar)
        trace = [res]
        iterations = 0
        stagnant = 0

        while res > opts.tol_inner:
            if iterations >= limit:
                log_error("inner solve did not converge", {"residual": res, "iterations": iterations,
                                                            "method": method})
                raise SolverError(f"inner solve did not converge in {iterations} iterations "
                                  f"(residual {res:.3e})", residual=res, trace=trace)
            if method == "ssn":
                u_new, sets = self.ssn_step(g_hat, pbar)
            else:
                u_new, sets = self.prox_map(g_hat, pbar), None
            iterations += 1
            pbar_new = self.phi_bar(u_new)
            res_new = self.inner_residual(u_new, g_hat, pbar_new)
            trace.append(res_new)
            log_event("inner_iteration", {"iteration": iterations, "method": method,
                                          "residual": res_new, "sets": sets}, "DEBUG")

            if method == "ssn" and res_new > 0.9 * res:
                stagnant += 1
                if stagnant >= 2:
                    log_event("inner_fallback_picard", {"iteration": iterations, "residual": res_new},
                              "WARNING")
                    method = "picard"
                    limit = iterations + PICARD_FACTOR * opts.max_inner
            else:
                stagnant = 0
            u, pbar, res = u_new, pbar_new, res_new

        return u, iterations, trace


def reconstruct_multipliers(p, pbar, u, w):
    """zeta, lambda_a, lambda_b and the stationarity defect from (phi_bar, u, w)"""
    tau = p.beta * p.delta_gamma
    if tau > 0:
        zeta_zero = np.clip(-(pbar - p.beta * w) / tau, -1.0, 1.0)
    else:
        zeta_zero = np.zeros_like(u)
    zeta = np.where(u != 0, np.sign(u), zeta_zero)
    defect = pbar + p.alpha * u + p.beta * (p.delta_gamma * zeta - w)
    at_lower = u <= p.u_a
    at_upper = u >= p.u_b
    lambda_a = np.where(at_lower, np.maximum(0.0, defect), 0.0)
    lambda_b = np.where(at_upper, np.maximum(0.0, -defect), 0.0)
    return zeta, lambda_a, lambda_b, defect


def kkt_from_arrays(p, areas, u, pbar, w):
    zeta, lam_a, lam_b, defect = reconstruct_multipliers(p, pbar, u, w)
    stationarity = np.sqrt(np.sum(areas * (defect + lam_b - lam_a) ** 2))
    complementarity = np.sum(areas * (np.abs(lam_a * (u - p.u_a)) + np.abs(lam_b * (p.u_b - u))))
    return float(stationarity + complementarity)


def kkt_residual(spec, m, report):
    """L2 stationarity defect plus complementarity defects, rebuilt from report.u and report.phi"""
    p = spec.params
    u = report.u.values
    pbar = element_average(report.phi).values
    return kkt_from_arrays(p, m.areas, u, pbar, j_func(u, p))


class DcaSolver:
    """DCA outer loop over auxiliary L1 problems, then a pointwise-Newton polish"""

    def __init__(self, spec, mesh, opts=None):
        self.spec = spec
        self.mesh = mesh
        self.opts = opts or SolveOptions()
        self.problem = DiscreteProblem(spec, mesh, self.opts.solve_method)
        self._lock = threading.Lock()

    def _initial(self):
        init = self.opts.initial
        if init is None:
            return np.zeros(self.mesh.n_triangles)
        values = init.values if isinstance(init, P0Field) else np.asarray(init, dtype=float)
        if values.shape != (self.mesh.n_triangles,):
            raise ConfigError(f"initial control has {values.shape[0]} values, mesh has "
                              f"{self.mesh.n_triangles} elements")
        return self.problem.clip(values)

    def _guarded_step(self, u, u_target, cost, theta):
        """Damped step u + theta (u_target - u), halving theta while the cost rises beyond slack"""
        prob = self.problem
        slack = SLACK_FACTOR * self.opts.tol_inner
        for _ in range(MAX_HALVINGS + 1):
            trial = u + theta * (u_target - u)
            trial_cost = prob.cost(trial)
            if trial_cost <= cost + slack:
                return trial, trial_cost, theta
            theta *= 0.5
        return None, cost, theta

    def _dca(self, u, history):
        p = self.spec.params
        prob = self.problem
        opts = self.opts
        stop = max(opts.tol_outer, opts.switch_tol or 0.0)
        inner_total = 0
        outer = 0
        for outer in range(1, opts.max_outer + 1):
            w = j_func(u, p)
            u_hat, inner_its, _ = prob.inner_solve(w, u, opts)
            inner_total += inner_its
            u_new, cost_new, theta = self._guarded_step(u, u_hat, history[-1], opts.damping)
            if u_new is None:
                log_event("dca_guard_exhausted", {"iteration": outer, "cost": history[-1]}, "WARNING")
                break
            step = prob.norm(u_new - u)
            u = u_new
            history.append(cost_new)
            log_event("dca_iteration", {"iteration": outer, "cost": cost_new, "step": step,
                                        "theta": theta, "inner_iterations": inner_its,
                                        "support": int(np.count_nonzero(u))}, "DEBUG")
            if step <= stop:
                break
        return u, outer, inner_total

    def _classify(self, target):
        p = self.spec.params
        classes = np.full(target.shape, ROOT)
        classes[target == 0] = ZERO
        classes[target <= p.u_a] = LOWER
        classes[target >= p.u_b] = UPPER
        return classes

    def _polish(self, u, history):
        """Newton on phi_bar + alpha u + beta pen'(u) = 0 over the elements whose pointwise minimiser is a root"""
        p = self.spec.params
        prob = self.problem
        tol = self.opts.tol_inner
        seen = {}
        iterations = 0
        for iterations in range(1, self.opts.max_outer + 1):
            pbar = prob.phi_bar(u)
            target = dc_argmin(pbar, p)
            gap = float(np.max(np.abs(u - target))) if len(u) else 0.0
            if gap <= tol:
                return u, iterations - 1

            classes = self._classify(target)
            key = classes.tobytes()
            if key in seen and gap >= 0.5 * seen[key]:
                level = "DEBUG" if gap <= 1e3 * tol else "WARNING"
                log_event("polish_cycle", {"iteration": iterations, "gap": gap}, level)
                return u, iterations
            seen[key] = gap

            trial = target.copy()
            root = classes == ROOT
            if np.any(root):
                pbar_t = prob.phi_bar(trial)
                ur = trial[root]
                defect = pbar_t[root] + p.alpha * ur + p.beta * penalty_derivative(ur, p)
                diag = p.alpha + p.beta * penalty_second_derivative(ur, p)
                try:
                    moved = ur + prob.solve_subset(root, diag, -defect)
                except SolverError:
                    moved = ur
                # stay on the branch the pointwise minimiser selected
                same_side = np.sign(moved) == np.sign(ur)
                trial[root] = np.where(same_side, np.clip(moved, p.u_a, p.u_b), ur)

            u_new, cost_new, theta = self._guarded_step(u, trial, history[-1], 1.0)
            if u_new is None:
                log_event("polish_guard_exhausted", {"iteration": iterations, "gap": gap}, "WARNING")
                return u, iterations
            u = u_new
            history.append(cost_new)
            log_event("polish_iteration", {"iteration": iterations, "gap": gap, "theta": theta,
                                           "cost": cost_new, "roots": int(root.sum())}, "DEBUG")
        return u, iterations

    def run(self):
        with self._lock:
            return self._run()

    def _run(self):
        p = self.spec.params
        prob = self.problem
        u = self._initial()
        history = [prob.cost(u)]

        u, outer, inner_total = self._dca(u, history)
        polish_its = 0
        if self.opts.polish:
            u, polish_its = self._polish(u, history)

        y = prob.state(u)
        phi = prob.adjoint(y)
        pbar = prob.element_mean(phi)
        w = j_func(u, p)
        zeta, lam_a, lam_b, _ = reconstruct_multipliers(p, pbar, u, w)
        kkt = kkt_from_arrays(p, prob.areas, u, pbar, w)
        target = dc_argmin(pbar, p)
        fp_defect = float(np.max(np.abs(u - target))) if len(u) else 0.0
        converged = kkt <= SLACK_FACTOR * self.opts.tol_inner

        m = self.mesh
        report = SolveReport(
            u=P0Field(m, u), y=P1Field(m, prob.full(y)), phi=P1Field(m, prob.full(phi)),
            w=P0Field(m, w), zeta=P0Field(m, zeta),
            lambda_a=P0Field(m, lam_a), lambda_b=P0Field(m, lam_b),
            cost_history=tuple(history),
            outer_iterations=outer,
            total_inner_iterations=inner_total,
            kkt_residual=kkt,
            support_element_count=int(np.count_nonzero(u)),
            polish_iterations=polish_its,
            fixed_point_defect=fp_defect,
            converged=converged,
        )
        log_event("solve_finished", {"triangles": m.n_triangles, **report.summary()})
        if not converged:
            log_error("solver did not reach the KKT tolerance", report.summary())
            raise SolverError(f"KKT residual {kkt:.3e} above {SLACK_FACTOR * self.opts.tol_inner:.1e}",
                              residual=kkt, trace=history, report=report)
        return report


# --- module-level operations ---

def _values(u, m):
    if isinstance(u, P0Field):
        if u.mesh is not m:
            raise MeshError("control does not live on the given mesh")
        return u.values
    return np.asarray(u, dtype=float)


def eval_cost(spec, m, u):
    """J_h(u): midpoint-quadrature tracking term plus exact regularisation terms"""
    return DiscreteProblem(spec, m).cost(_values(u, m))


def inner_solve_l1(spec, m, g_hat, u_start=None, opts=None):
    """Minimiser of the auxiliary L1-sparse problem with linear term -beta (g_hat, u)"""
    opts = opts or SolveOptions()
    p = spec.params
    g = _values(g_hat, m)
    if np.any(np.abs(g) > p.delta_gamma * (1 + 1e-12)):
        raise ValueError("g_hat must be bounded by delta_gamma elementwise")
    start = np.zeros(m.n_triangles) if u_start is None else _values(u_start, m)
    u, _, _ = DiscreteProblem(spec, m, opts.solve_method).inner_solve(g, start, opts)
    return P0Field(m, u)


def solve(spec, m, opts=None):
    return DcaSolver(spec, m, opts).run()


@dataclass(frozen=True)
class StructureDiagnostics:
    support_fraction: float
    support_count: int
    min_nonzero_abs: Optional[float]
    band_violations: int
    core_support: int
    jump_threshold: float
    threshold_margin: Optional[float]
    lower_margin: Optional[float]
    upper_margin: Optional[float]

    def as_dict(self):
        return dict(self.__dict__)


def structure_diagnostics(report, p):
    """Support size, jump-band violations and the margins of the interior-value bounds.

    Interior values inside the smoothing core |u| <= 1/gamma are counted as
    core_support, not as band violations; the margins cover the outer branch.
    """
    u = report.u.values
    nz = u != 0
    core = core_support_mask(u, p)
    outer_support = nz & (u > p.u_a) & (u < p.u_b) & ~core
    threshold = p.jump_threshold
    band = jump_band_mask(u, p)

    a = np.abs(u[outer_support])
    lower_margin = upper_margin = None
    if a.size:
        with np.errstate(invalid="ignore", divide="ignore"):
            middle = a + p.beta * p.q / p.alpha * np.maximum(a - p.shift, 1e-300) ** (p.q - 1.0)
        lower = p.eta_min / p.alpha
        upper = float(np.max(np.abs(element_average(report.phi).values))) / p.alpha
        lower_margin = float(np.min(middle - lower))
        upper_margin = float(np.min(upper - middle))

    diag = StructureDiagnostics(
        support_fraction=float(nz.mean()) if u.size else 0.0,
        support_count=int(nz.sum()),
        min_nonzero_abs=float(np.min(np.abs(u[nz]))) if nz.any() else None,
        band_violations=int(band.sum()),
        core_support=int(core.sum()),
        jump_threshold=threshold,
        threshold_margin=float(np.min(np.abs(u[nz])) / threshold) if nz.any() and threshold > 0 else None,
        lower_margin=lower_margin,
        upper_margin=upper_margin,
    )
    log_metrics({"structure": diag.as_dict()}, "structure_diagnostics")
    return diag


def quadratic_growth_diagnostic(spec, m, report, samples=16, radius=1e-2, seed=0):
    """Empirical sigma in sigma ||u - u_bar||^2 <= J(u) - J(u_bar) over random admissible perturbations"""
    prob = DiscreteProblem(spec, m)
    rng = np.random.default_rng(seed)
    u_bar = report.u.values
    base = prob.cost(u_bar)
    ratios = []
    for _ in range(samples):
        trial = prob.clip(u_bar + radius * rng.standard_normal(u_bar.shape))
        dist2 = prob.norm(trial - u_bar) ** 2
        if dist2 > 0:
            ratios.append((prob.cost(trial) - base) / dist2)
    ratios = np.array(ratios)
    result = {
        "samples": int(ratios.size),
        "radius": radius,
        "sigma_min": float(ratios.min()) if ratios.size else None,
        "sigma_median": float(np.median(ratios)) if ratios.size else None,
        "growth_holds": bool(ratios.size and ratios.min() > 0),
    }
    log_metrics(result, "quadratic_growth")
    return result


def beta_sparsity_sweep(spec, m, opts=None, factors=(1.0, 10.0, 100.0)):
    """Support fraction for beta scaled by each factor; non-monotone outcomes are logged"""
    rows = []
    for factor in factors:
        params = spec.params.replace(beta=spec.params.beta * factor)
        try:
            report = solve(replace(spec, params=params), m, opts)
            rows.append({"beta": params.beta, "support_fraction": report.support_fraction,
                         "kkt_residual": report.kkt_residual, "status": "ok"})
        except SolverError as e:
            rows.append({"beta": params.beta, "support_fraction": np.nan,
                         "kkt_residual": e.residual, "status": "failed"})
    frame = pd.DataFrame(rows)
    support = frame["support_fraction"].to_numpy()
    monotone = bool(np.all(np.diff(support) <= 1e-15))
    if not monotone:
        log_event("sparsity_not_monotone", {"beta": frame["beta"].tolist(),
                                            "support_fraction": support.tolist()}, "WARNING")
    return frame, monotone


def write_report(report, directory, prefix="", formats=("csv", "vtk")):
    """Per-element CSV, cost history CSV and VTK dumps of u, y, phi"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    m = report.mesh
    paths = {
        "elements": report.to_csv(directory / f"{prefix}elements.csv"),
        "history": directory / f"{prefix}cost_history.csv",
    }
    pd.DataFrame({"iteration": np.arange(len(report.cost_history)),
                  "cost": report.cost_history}).to_csv(paths["history"], index=False, float_format="%.17g")
    if "vtk" not in formats:
        return paths
    paths.update({
        "u": m.to_vtk(directory / f"{prefix}u.vtk", cell_data={
            "u": report.u.values, "w": report.w.values, "zeta": report.zeta.values,
            "lambda_a": report.lambda_a.values, "lambda_b": report.lambda_b.values}),
        "y": m.to_vtk(directory / f"{prefix}y.vtk", point_data={"y": report.y.coefficients}),
        "phi": m.to_vtk(directory / f"{prefix}phi.vtk", point_data={"phi": report.phi.coefficients}),
    })
    return paths


def load_initial(path, mesh):
    """Initial control from a per-element CSV with a `u` column"""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise ConfigError(f"initial control file {path} does not exist")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigError(f"cannot parse initial control file {path}: {e}")
    if "u" not in frame.columns:
        raise ConfigError(f"initial control file {path} has no 'u' column")
    if len(frame) != mesh.n_triangles:
        raise ConfigError(f"initial control file has {len(frame)} rows, mesh has {mesh.n_triangles} elements")
    return P0Field(mesh, frame["u"].to_numpy(dtype=float))
