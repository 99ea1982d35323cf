# core/fem.py

import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.mesh import TriMesh
from core.quadrature import DEGREE4, EDGE_MIDPOINT, evaluate
from core.utils.errors import MeshError, SolverError
from utils.logger import log_event


# --- fields ---

def _frozen(values, size, kind):
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise MeshError(f"{kind} expects {size} coefficients, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class P1Field:
    """Continuous piecewise-linear field, one coefficient per vertex"""
    mesh: TriMesh
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           _frozen(self.coefficients, self.mesh.n_vertices, "P1Field"))

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def from_interior(cls, mesh, values):
        coeff = np.zeros(mesh.n_vertices)
        coeff[mesh.interior] = values
        return cls(mesh, coeff)

    @property
    def interior_values(self):
        return self.coefficients[self.mesh.interior]

    def satisfies_dirichlet(self, tol=0.0):
        return bool(np.all(np.abs(self.coefficients[self.mesh.boundary]) <= tol))

    def at_points(self, rule):
        """Values at a quadrature rule's points, shape (M, k)"""
        return self.coefficients[self.mesh.triangles] @ rule.points.T

    def gradients(self):
        """Constant gradient per element, shape (M, 2)"""
        return np.einsum("mi,mid->md", self.coefficients[self.mesh.triangles], self.mesh.gradients)

    def __add__(self, other):
        return P1Field(self.mesh, self.coefficients + _coeffs_of(other, self.mesh))

    def __sub__(self, other):
        return P1Field(self.mesh, self.coefficients - _coeffs_of(other, self.mesh))

    def __mul__(self, scalar):
        return P1Field(self.mesh, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return P1Field(self.mesh, -self.coefficients)


@dataclass(frozen=True, eq=False)
class P0Field:
    """Piecewise-constant field, one value per triangle"""
    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.mesh.n_triangles, "P0Field"))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("P0Field values must be finite")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_triangles))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.n_triangles, float(value)))

    def at_points(self, rule):
        return np.repeat(self.values[:, None], rule.size, axis=1)

    def __add__(self, other):
        return P0Field(self.mesh, self.values + _coeffs_of(other, self.mesh))

    def __sub__(self, other):
        return P0Field(self.mesh, self.values - _coeffs_of(other, self.mesh))

    def __mul__(self, scalar):
        return P0Field(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return P0Field(self.mesh, -self.values)


def _coeffs_of(other, mesh):
    if isinstance(other, (P1Field, P0Field)):
        if other.mesh is not mesh:
            raise MeshError("fields live on different meshes")
        return other.coefficients if isinstance(other, P1Field) else other.values
    return float(other)


def _check_same_mesh(m, *fields):
    for f in fields:
        if f is not None and getattr(f, "mesh", m) is not m:
            raise MeshError("field does not live on the given mesh")


FunctionSpec = Union[None, float, Callable, P1Field, P0Field]


def values_at(spec, mesh, rule):
    """Values of a function spec at a rule's points on every element, shape (M, k)"""
    if spec is None:
        return np.zeros((mesh.n_triangles, rule.size))
    if isinstance(spec, (P1Field, P0Field)):
        _check_same_mesh(mesh, spec)
        return spec.at_points(rule)
    if callable(spec):
        return np.array(evaluate(spec, mesh, rule), dtype=float)
    return np.full((mesh.n_triangles, rule.size), float(spec))


def interpolate_p1(mesh, func, dirichlet=False):
    """Nodal interpolant of a callable; optionally zeroed on Dirichlet vertices"""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    coeff = np.array(np.broadcast_to(func(x, y), x.shape), dtype=float)
    if dirichlet:
        coeff[mesh.boundary] = 0.0
    return P1Field(mesh, coeff)


# --- coefficients and matrices ---

@dataclass(frozen=True)
class EllipticCoeffs:
    """a(y, v) = int a grad y . grad v + c0 y v.

    `a` is a constant 2x2 symmetric matrix or a callable a(x, y) -> (..., 2, 2);
    `c0` is a nonnegative constant or callable. Identity and 0 by default.
    """
    a: Union[np.ndarray, Callable, None] = None
    c0: Union[float, Callable, None] = None
    sigma_min: float = 1e-12

    def __post_init__(self):
        if self.sigma_min < 0:
            raise ValueError("sigma_min must be nonnegative")

    @property
    def is_constant(self):
        return not callable(self.a) and not callable(self.c0)

    def matrix_at(self, x, y):
        if self.a is None:
            out = np.zeros(np.shape(x) + (2, 2))
            out[..., 0, 0] = out[..., 1, 1] = 1.0
            return out
        if callable(self.a):
            return np.broadcast_to(np.asarray(self.a(x, y), dtype=float), np.shape(x) + (2, 2))
        return np.broadcast_to(np.asarray(self.a, dtype=float), np.shape(x) + (2, 2))

    def reaction_at(self, x, y):
        if self.c0 is None:
            return np.zeros(np.shape(x))
        if callable(self.c0):
            return np.broadcast_to(np.asarray(self.c0(x, y), dtype=float), np.shape(x))
        return np.full(np.shape(x), float(self.c0))


@dataclass(frozen=True, eq=False)
class SparseSpd:
    """Stiffness matrix over interior DOFs plus the full (all-vertex) assembly"""
    mesh: TriMesh
    matrix: sp.csr_matrix
    full: sp.csr_matrix = field(repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def diagonal(self):
        return self.matrix.diagonal()


def _check_ellipticity(A, c0, pts, sigma_min):
    a11, a12, a21, a22 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    asym = np.abs(a12 - a21)
    if np.any(asym > 1e-12 * (1 + np.abs(a11) + np.abs(a22))):
        k = np.unravel_index(np.argmax(asym), asym.shape)
        raise ValueError(f"coefficient matrix is not symmetric at {tuple(pts[k])}")
    lam_min = 0.5 * (a11 + a22) - np.sqrt(0.25 * (a11 - a22) ** 2 + a12 ** 2)
    if np.any(lam_min < sigma_min):
        k = np.unravel_index(np.argmin(lam_min), lam_min.shape)
        raise ValueError(f"uniform ellipticity violated at {tuple(pts[k])}: "
                         f"smallest eigenvalue {lam_min[k]:.3e} < {sigma_min:.3e}")
    if np.any(c0 < 0):
        k = np.unravel_index(np.argmin(c0), c0.shape)
        raise ValueError(f"reaction coefficient c0 negative at {tuple(pts[k])}")


def _scatter(m, local):
    """Assemble (M, 3, 3) element matrices into a full N x N csr matrix"""
    tri = m.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = m.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _local_mass(m, weights=None):
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    scale = m.areas if weights is None else m.areas * weights
    return scale[:, None, None] * base


def assemble_mass(m):
    """Exact P1 mass matrix over all vertices"""
    return _scatter(m, _local_mass(m))


def assemble_stiffness(m, c=None):
    """Matrix of a(phi_j, phi_i) over interior vertices"""
    c = c or EllipticCoeffs()
    G = m.gradients
    rule = EDGE_MIDPOINT
    pts = np.einsum("kj,mjd->mkd", rule.points, m.corners)
    A = c.matrix_at(pts[..., 0], pts[..., 1])
    c0 = c.reaction_at(pts[..., 0], pts[..., 1])
    _check_ellipticity(A, c0, pts, c.sigma_min)

    if c.is_constant:
        A_bar = m.areas[:, None, None] * A[:, 0]
        local = np.einsum("mid,mde,mje->mij", G, A_bar, G)
        local += _local_mass(m, c0[:, 0])
    else:
        A_bar = m.areas[:, None, None] * np.einsum("k,mkde->mde", rule.weights, A)
        local = np.einsum("mid,mde,mje->mij", G, A_bar, G)
        # lambda_i at edge midpoints are 0 or 1/2
        lam = rule.points
        local += m.areas[:, None, None] * np.einsum("k,mk,ki,kj->mij", rule.weights, c0, lam, lam)

    full = _scatter(m, local)
    interior = m.interior
    matrix = full[interior][:, interior].tocsr()
    log_event("stiffness_assembled", {"dofs": len(interior), "nnz": matrix.nnz}, "DEBUG")
    return SparseSpd(m, matrix, full)


def _bincount_load(m, local):
    """Scatter (M, 3) local loads to interior DOFs"""
    b = np.bincount(m.triangles.ravel(), weights=local.ravel(), minlength=m.n_vertices)
    return b[m.interior]


def assemble_p0_load(m, u):
    """b_i = sum_T u_T |T| / 3 over triangles incident to interior vertex i"""
    _check_same_mesh(m, u)
    local = np.repeat((u.values * m.areas / 3.0)[:, None], 3, axis=1)
    return _bincount_load(m, local)


def load_from_values(m, values, rule=EDGE_MIDPOINT):
    """b_i = int g phi_i, with g given by its values (M, k) at the rule's points"""
    local = m.areas[:, None] * ((np.asarray(values) * rule.weights) @ rule.points)
    return _bincount_load(m, local)


def load_vector(m, f, rule=EDGE_MIDPOINT):
    """b_i = int f phi_i by quadrature; zero vector for f = None"""
    if f is None:
        return np.zeros(m.n_interior)
    return load_from_values(m, values_at(f, m, rule), rule)


# --- linear solves ---

def _as_operator(A):
    if isinstance(A, SparseSpd):
        return A.matrix
    return A


def _jacobi(A):
    diag = _diagonal(A)
    if diag is None or np.any(diag <= 0):
        return None
    inv = 1.0 / diag
    return lambda r: inv * r


def _diagonal(A):
    if sp.issparse(A):
        return A.diagonal()
    if isinstance(A, np.ndarray):
        return np.diag(A)
    return None


def solve_spd(A, b, tol=1e-12, maxiter=None, x0=None, preconditioner=None, return_info=False):
    """Jacobi-preconditioned conjugate gradients (scipy cg) with a relative residual target.

    `A` may be a SparseSpd, scipy sparse matrix, dense array or LinearOperator.
    Raises SolverError carrying the final relative residual when the iteration
    cap (default ceil(20 sqrt(n))) is reached or A is not positive definite.
    """
    op = _as_operator(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxiter = maxiter or max(1, int(np.ceil(20 * np.sqrt(max(n, 1)))))

    norm_b = np.linalg.norm(b)
    if n == 0 or norm_b == 0.0:
        x = np.zeros(n)
        return (x, {"iterations": 0, "residual": 0.0}) if return_info else x

    diag = _diagonal(op)
    if diag is not None and np.any(diag <= 0):
        raise SolverError(f"matrix is not positive definite (diagonal entry {diag.min():.3e})",
                          residual=1.0)

    A_op = spla.aslinearoperator(op)
    M = preconditioner or _jacobi(op)
    M_op = spla.LinearOperator((n, n), matvec=M, dtype=float) if M is not None else None
    steps = []
    x, info = spla.cg(A_op, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M_op,
                      callback=lambda xk: steps.append(1))
    rel = float(np.linalg.norm(b - A_op.matvec(x)) / norm_b)
    it = len(steps)

    if info < 0:
        raise SolverError(f"cg breakdown (info={info})", residual=rel)
    if float(b @ x) <= 0.0:
        raise SolverError(f"matrix is not positive definite (b'x = {float(b @ x):.3e})", residual=rel)
    if info > 0:
        log_event("pcg_not_converged", {"n": n, "iterations": it, "residual": rel}, "WARNING")
        raise SolverError(f"PCG did not converge in {it} iterations (relative residual {rel:.3e})",
                          residual=rel)
    return (x, {"iterations": it, "residual": rel}) if return_info else x


class StateOperator:
    """Solution operator S_h for a fixed mesh and coefficients.

    The optimiser solves with the same stiffness matrix many times, so by default the
    matrix is factorised once (sparse LU); method="cg" falls back to solve_spd per call.
    """

    def __init__(self, mesh, coeffs=None, method="lu", tol=1e-12):
        self.mesh = mesh
        self.coeffs = coeffs or EllipticCoeffs()
        self.stiffness = assemble_stiffness(mesh, self.coeffs)
        self.method = method
        self.tol = tol
        self._factor = None
        if method == "lu" and mesh.n_interior > 0:
            self._factor = spla.splu(self.stiffness.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")
        elif method not in ("lu", "cg"):
            raise ValueError(f"unknown solve method {method!r}")
        self.solves = 0

    def solve(self, b):
        self.solves += 1
        if self.mesh.n_interior == 0:
            return np.zeros(0)
        if self._factor is not None:
            return self._factor.solve(np.asarray(b, dtype=float))
        return solve_spd(self.stiffness, b, tol=self.tol)


def solve_state(m, u, f=None, coeffs=None, operator=None):
    """Discrete state y_h = S_h u + y_{h,f} with homogeneous Dirichlet data"""
    _check_same_mesh(m, u, f if isinstance(f, (P1Field, P0Field)) else None)
    b = assemble_p0_load(m, u) + load_vector(m, f)
    if operator is not None:
        y = operator.solve(b)
    else:
        y = solve_spd(assemble_stiffness(m, coeffs), b)
    return P1Field.from_interior(m, y)


def solve_adjoint(m, y, yd, coeffs=None, operator=None):
    """Discrete adjoint: a*(phi_h, v) = (y_h - y_d, v), right-hand side by edge-midpoint quadrature"""
    _check_same_mesh(m, y)
    values = y.at_points(EDGE_MIDPOINT) - values_at(yd, m, EDGE_MIDPOINT)
    b = load_from_values(m, values, EDGE_MIDPOINT)
    # a is symmetric, so a* uses the same matrix
    if operator is not None:
        phi = operator.solve(b)
    else:
        phi = solve_spd(assemble_stiffness(m, coeffs), b)
    return P1Field.from_interior(m, phi)


def element_average(y):
    """(1/|T|) int_T y, the mean of the three vertex values"""
    return P0Field(y.mesh, y.coefficients[y.mesh.triangles].mean(axis=1))


# --- inter-level transfer ---

def _barycentric_in(corners, points):
    """Barycentric coordinates of points (M, k, 2) in triangles (M, 3, 2)"""
    p0 = corners[:, 0]
    T = np.stack([corners[:, 1] - p0, corners[:, 2] - p0], axis=2)
    rel = points - p0[:, None, :]
    lam12 = np.linalg.solve(T[:, None], rel[..., None])[..., 0]
    return np.concatenate([1.0 - lam12.sum(axis=-1, keepdims=True), lam12], axis=-1)


def prolong(field_, fine):
    """Exact representation of a coarse P0/P1 field on a descendant mesh"""
    coarse = field_.mesh
    if fine is coarse:
        return field_
    anc = fine.ancestor_map(coarse)
    if isinstance(field_, P0Field):
        return P0Field(fine, field_.values[anc])
    lam = _barycentric_in(coarse.corners[anc], fine.corners)
    vals = np.einsum("mkj,mj->mk", lam, field_.coefficients[coarse.triangles[anc]])
    coeff = np.zeros(fine.n_vertices)
    coeff[fine.triangles.ravel()] = vals.ravel()
    return P1Field(fine, coeff)


def _common_mesh(p, q):
    if p.mesh is q.mesh:
        return p, q
    if q.mesh.descends_from(p.mesh):
        return prolong(p, q.mesh), q
    if p.mesh.descends_from(q.mesh):
        return p, prolong(q, p.mesh)
    raise MeshError("fields live on incompatible meshes")


# --- norms ---

def l2_inner(p, q):
    """Exact L2 inner product of P0/P1 fields on the same mesh or one lineage"""
    p, q = _common_mesh(p, q)
    m = p.mesh
    if isinstance(p, P0Field) and isinstance(q, P0Field):
        return float(np.sum(m.areas * p.values * q.values))
    if isinstance(p, P0Field):
        p, q = q, p
    if isinstance(q, P0Field):
        means = p.coefficients[m.triangles].mean(axis=1)
        return float(np.sum(m.areas * means * q.values))
    pt = p.coefficients[m.triangles]
    qt = q.coefficients[m.triangles]
    local = (np.sum(pt * qt, axis=1) + pt.sum(axis=1) * qt.sum(axis=1)) / 12.0
    return float(np.sum(m.areas * local))


def l2_norm(p):
    return float(np.sqrt(max(l2_inner(p, p), 0.0)))


def l2_error_to(field_, func, rule=DEGREE4):
    """||field - func||_{L2} by quadrature"""
    m = field_.mesh
    diff = field_.at_points(rule) - values_at(func, m, rule)
    return float(np.sqrt(np.sum(m.areas * ((diff ** 2) @ rule.weights))))


def h1_seminorm_error(y, grad_func, rule=DEGREE4):
    """||grad y_h - grad u||_{L2}; grad_func(x, y) returns (gx, gy)"""
    m = y.mesh
    pts = np.einsum("kj,mjd->mkd", rule.points, m.corners)
    gx, gy = grad_func(pts[..., 0], pts[..., 1])
    g = y.gradients()
    err = (g[:, 0:1] - gx) ** 2 + (g[:, 1:2] - gy) ** 2
    return float(np.sqrt(np.sum(m.areas * (err @ rule.weights))))
