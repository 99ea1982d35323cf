# test_fem.py

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.fem import (EllipticCoeffs, P0Field, P1Field, StateOperator, assemble_mass, assemble_p0_load,
                      assemble_stiffness, element_average, h1_seminorm_error, interpolate_p1, l2_error_to,
                      l2_inner, l2_norm, load_vector, prolong, solve_adjoint, solve_spd, solve_state)
from core.mesh import build_uniform_square, refine_times, refine_uniform, refinement_ladder
from core.presets import manufactured_source, sine_product, sine_product_gradient
from core.quadrature import CENTROID, DEGREE4, EDGE_MIDPOINT, composite_rule
from core.utils.errors import MeshError, SolverError


def _vertex_at(m, x, y):
    return int(np.argmin(np.hypot(m.vertices[:, 0] - x, m.vertices[:, 1] - y)))


# --- quadrature ---

@pytest.mark.parametrize("rule", [CENTROID, EDGE_MIDPOINT, DEGREE4, composite_rule(DEGREE4, 2)])
def test_rules_integrate_polynomials_of_their_degree(rule):
    m = build_uniform_square(3)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    from core.quadrature import evaluate, integrate_elementwise
    # int x^d over the unit square is 1/(d+1)
    for d in range(rule.degree + 1):
        total = integrate_elementwise(m, evaluate(lambda x, y: x ** d, m, rule), rule).sum()
        assert total == pytest.approx(1.0 / (d + 1), rel=1e-12)


# --- assembly ---

def test_stiffness_single_interior_vertex():
    A = assemble_stiffness(build_uniform_square(2))
    assert A.shape == (1, 1)
    assert A.matrix.toarray()[0, 0] == pytest.approx(4.0, rel=1e-14)


def test_stiffness_rows_of_full_matrix_sum_to_zero():
    A = assemble_stiffness(build_uniform_square(6))
    assert np.allclose(np.asarray(A.full.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_stiffness_is_symmetric_positive_definite():
    K = assemble_stiffness(build_uniform_square(5)).matrix.toarray()
    assert np.allclose(K, K.T, atol=1e-14)
    assert np.linalg.eigvalsh(K).min() > 0


def test_mass_matrix_totals_area():
    m = build_uniform_square(4)
    assert assemble_mass(m).sum() == pytest.approx(1.0, rel=1e-14)
    ones = np.ones(m.n_vertices)
    assert ones @ (assemble_mass(m) @ ones) == pytest.approx(1.0, rel=1e-14)


def test_pure_reaction_gives_mass_matrix():
    m = build_uniform_square(4)
    c = EllipticCoeffs(a=np.zeros((2, 2)), c0=1.0, sigma_min=0.0)
    A = assemble_stiffness(m, c)
    assert np.allclose(A.full.toarray(), assemble_mass(m).toarray(), atol=1e-15)


def test_non_elliptic_coefficient_rejected():
    m = build_uniform_square(2)
    with pytest.raises(ValueError, match="uniform ellipticity"):
        assemble_stiffness(m, EllipticCoeffs(a=np.diag([1.0, -1.0])))


def test_variable_coefficients_give_spd_matrix():
    m = build_uniform_square(6)

    def a(x, y):
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 0, 0] = 1.0 + x
        out[..., 1, 1] = 2.0 + np.sin(y)
        out[..., 0, 1] = out[..., 1, 0] = 0.25
        return out

    K = assemble_stiffness(m, EllipticCoeffs(a=a, c0=lambda x, y: 1.0 + x * y)).matrix.toarray()
    assert np.allclose(K, K.T, atol=1e-13)
    assert np.linalg.eigvalsh(K).min() > 0


def test_constant_coefficient_paths_agree():
    m = build_uniform_square(4)
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    const = assemble_stiffness(m, EllipticCoeffs(a=A, c0=3.0)).matrix
    func = assemble_stiffness(m, EllipticCoeffs(a=lambda x, y: A, c0=lambda x, y: 3.0 + 0 * x)).matrix
    assert np.allclose(const.toarray(), func.toarray(), atol=1e-13)


# --- loads ---

def test_p0_load_single_vertex():
    m = build_uniform_square(2)
    b = assemble_p0_load(m, P0Field.constant(m, 1.0))
    assert b == pytest.approx([0.25], rel=1e-14)


def test_p0_load_is_linear():
    m = build_uniform_square(4)
    rng = np.random.default_rng(1)
    u = P0Field(m, rng.normal(size=m.n_triangles))
    v = P0Field(m, rng.normal(size=m.n_triangles))
    lhs = assemble_p0_load(m, u * 2.0 - v)
    rhs = 2.0 * assemble_p0_load(m, u) - assemble_p0_load(m, v)
    assert np.allclose(lhs, rhs, atol=1e-15)


def test_load_vector_of_none_is_zero():
    m = build_uniform_square(3)
    assert np.array_equal(load_vector(m, None), np.zeros(m.n_interior))


def test_field_on_wrong_mesh_rejected():
    m, other = build_uniform_square(2), build_uniform_square(2)
    with pytest.raises(MeshError):
        assemble_p0_load(m, P0Field.zeros(other))


# --- linear solver ---

def test_solve_spd_zero_rhs():
    x = solve_spd(sp.eye(5, format="csr"), np.zeros(5))
    assert np.array_equal(x, np.zeros(5))


def test_solve_spd_identity():
    b = np.arange(1.0, 6.0)
    assert np.allclose(solve_spd(np.eye(5), b), b, rtol=1e-14)


def test_solve_spd_random_matrix():
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(50, 50))
    A = Q @ Q.T + 50 * np.eye(50)
    b = rng.normal(size=50)
    x, info = solve_spd(A, b, return_info=True)
    assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)
    assert info["iterations"] <= int(np.ceil(20 * np.sqrt(50)))


def test_solve_spd_reports_residual_when_capped():
    n = 100
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    with pytest.raises(SolverError) as err:
        solve_spd(A, np.ones(n), maxiter=2)
    assert err.value.residual > 1e-12


def test_solve_spd_rejects_indefinite():
    with pytest.raises(SolverError, match="not positive definite"):
        solve_spd(-np.eye(3), np.ones(3))
    negative = spla.aslinearoperator(-sp.eye(4, format="csr"))
    with pytest.raises(SolverError, match="not positive definite"):
        solve_spd(negative, np.ones(4))


def test_solve_spd_matches_direct_solve_on_stiffness():
    A = assemble_stiffness(build_uniform_square(16))
    b = np.random.default_rng(4).normal(size=A.matrix.shape[0])
    x, info = solve_spd(A, b, return_info=True)
    assert np.allclose(x, spla.spsolve(A.matrix.tocsc(), b), rtol=0, atol=1e-8 * np.abs(x).max())
    assert 0 < info["iterations"] <= int(np.ceil(20 * np.sqrt(len(b))))
    assert info["residual"] <= 1e-12


def test_solve_spd_linear_operator_and_warm_start():
    n = 30
    A = sp.diags([-np.ones(n - 1), 3 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    b = np.ones(n)
    op = spla.LinearOperator((n, n), matvec=lambda v: A @ v, dtype=float)
    x = solve_spd(op, b)
    assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)
    exact = spla.spsolve(A.tocsc(), b)
    _, info = solve_spd(A, b, x0=exact, return_info=True)
    assert info["iterations"] == 0


# --- state and adjoint ---

def test_state_without_interior_vertices():
    m = build_uniform_square(1)
    y = solve_state(m, P0Field.constant(m, 1.0))
    assert np.array_equal(y.coefficients, np.zeros(4))


def test_state_satisfies_dirichlet():
    m = build_uniform_square(8)
    y = solve_state(m, P0Field.constant(m, 1.0), f=lambda x, y: x)
    assert y.satisfies_dirichlet()


def test_lu_and_cg_operators_agree():
    m = build_uniform_square(12)
    u = P0Field(m, np.random.default_rng(3).normal(size=m.n_triangles))
    y_lu = solve_state(m, u, operator=StateOperator(m))
    y_cg = solve_state(m, u, operator=StateOperator(m, method="cg"))
    assert np.allclose(y_lu.coefficients, y_cg.coefficients, atol=1e-10)


def test_manufactured_solution_rates():
    errors_l2, errors_h1, sizes = [], [], []
    for n in (16, 32, 64, 128):
        m = build_uniform_square(n)
        y = solve_state(m, P0Field.zeros(m), f=manufactured_source, operator=StateOperator(m))
        errors_l2.append(l2_error_to(y, sine_product))
        errors_h1.append(h1_seminorm_error(y, sine_product_gradient))
        sizes.append(m.h)
    rate_l2 = np.polyfit(np.log(sizes), np.log(errors_l2), 1)[0]
    rate_h1 = np.polyfit(np.log(sizes), np.log(errors_h1), 1)[0]
    assert rate_l2 == pytest.approx(2.0, abs=0.15)
    assert rate_h1 == pytest.approx(1.0, abs=0.15)


def test_nonnegative_control_gives_nonnegative_state():
    m = build_uniform_square(10)
    u = P0Field(m, np.abs(np.random.default_rng(4).normal(size=m.n_triangles)))
    y = solve_state(m, u)
    assert y.coefficients.min() >= -1e-14


def test_state_operator_is_self_adjoint():
    m = build_uniform_square(6)
    rng = np.random.default_rng(5)
    u = P0Field(m, rng.normal(size=m.n_triangles))
    v = P0Field(m, rng.normal(size=m.n_triangles))
    lhs = l2_inner(solve_state(m, u), v)
    rhs = l2_inner(u, solve_state(m, v))
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-15)


def test_adjoint_vanishes_on_target():
    m = build_uniform_square(6)
    y = solve_state(m, P0Field.constant(m, 1.0))
    phi = solve_adjoint(m, y, y)
    assert np.array_equal(phi.coefficients, np.zeros(m.n_vertices))


def test_adjoint_torsion_value_at_center():
    m = build_uniform_square(32)
    phi = solve_adjoint(m, P1Field.zeros(m), 1.0)
    centre = _vertex_at(m, 0.5, 0.5)
    assert centre == 544
    assert phi.coefficients[centre] == pytest.approx(-0.07367, abs=1e-3)


def test_state_and_adjoint_are_consistent():
    # (y(u) - y_d, S v) == (phi(u), v) for P0 controls when y_d is piecewise linear
    m = build_uniform_square(8)
    rng = np.random.default_rng(6)
    u = P0Field(m, rng.normal(size=m.n_triangles))
    v = P0Field(m, rng.normal(size=m.n_triangles))
    yd = interpolate_p1(m, lambda x, y: x * (1 - y))
    y = solve_state(m, u)
    phi = solve_adjoint(m, y, yd)
    lhs = l2_inner(phi, v)
    Sv = solve_state(m, v)
    # edge-midpoint load is exact for P1 x P1 products
    rhs = l2_inner(y - yd, Sv)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def test_state_is_stable_in_l2():
    m = build_uniform_square(16)
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(5):
        u = P0Field(m, rng.normal(size=m.n_triangles))
        ratios.append(l2_norm(solve_state(m, u)) / l2_norm(u))
    # the Poincare constant of the unit square bounds ||S|| by 1 / (2 pi^2)
    assert max(ratios) <= 1.0 / (2 * np.pi ** 2) + 1e-3


def _h1_seminorm(y):
    return h1_seminorm_error(y, lambda x, _: (np.zeros_like(x), np.zeros_like(x)))


def test_state_is_stable_in_h1_across_refinement():
    bound = 1.0 / (np.pi * np.sqrt(2.0))
    rng = np.random.default_rng(8)
    energies = []
    for m in refinement_ladder(4, 4):
        y = solve_state(m, P0Field.constant(m, 1.0))
        energies.append(_h1_seminorm(y))
        u = P0Field(m, rng.normal(size=m.n_triangles))
        assert _h1_seminorm(solve_state(m, u)) <= bound * l2_norm(u) * (1 + 1e-10)
    # nested Galerkin spaces: the energy grows toward the continuous value and stays bounded
    assert all(a <= b * (1 + 1e-12) for a, b in zip(energies, energies[1:]))
    assert max(energies) <= bound
    assert max(energies) / min(energies) <= 1.15


# --- fields, transfer and norms ---

def test_element_average_of_linear_function():
    m = build_uniform_square(5)
    y = interpolate_p1(m, lambda x, y: x + 2 * y)
    avg = element_average(y)
    expected = m.barycenters[:, 0] + 2 * m.barycenters[:, 1]
    assert np.allclose(avg.values, expected, atol=1e-14)


def test_l2_norm_examples():
    m = build_uniform_square(4)
    assert l2_norm(P0Field.constant(m, 1.0)) == pytest.approx(1.0, rel=1e-14)
    assert l2_norm(interpolate_p1(m, lambda x, y: 1.0 + 0 * x)) == pytest.approx(1.0, rel=1e-14)
    fx = interpolate_p1(m, lambda x, y: x)
    fy = interpolate_p1(m, lambda x, y: y)
    assert l2_inner(fx, fy) == pytest.approx(0.25, rel=1e-13)
    assert l2_norm(fx) == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-13)


def test_dirichlet_interpolation():
    m = build_uniform_square(4)
    f = interpolate_p1(m, lambda x, y: 1.0 + x, dirichlet=True)
    assert f.satisfies_dirichlet()
    assert not interpolate_p1(m, lambda x, y: 1.0 + x).satisfies_dirichlet()


def test_prolong_is_exact():
    coarse = build_uniform_square(3)
    fine = refine_times(coarse, 2)
    linear = lambda x, y: 3 * x - y + 0.5
    p1 = prolong(interpolate_p1(coarse, linear), fine)
    assert np.allclose(p1.coefficients, interpolate_p1(fine, linear).coefficients, atol=1e-13)

    u = P0Field(coarse, np.arange(coarse.n_triangles, dtype=float))
    up = prolong(u, fine)
    assert np.array_equal(up.values, u.values[fine.ancestor_map(coarse)])
    assert l2_norm(up) == pytest.approx(l2_norm(u), rel=1e-13)


def test_inner_product_across_levels():
    coarse = build_uniform_square(2)
    fine = refine_uniform(coarse)
    u = P0Field(coarse, np.linspace(-1, 1, coarse.n_triangles))
    v = interpolate_p1(fine, lambda x, y: x * y)
    assert l2_inner(u, v) == pytest.approx(l2_inner(prolong(u, fine), v), rel=1e-13)


def test_fields_are_immutable():
    m = build_uniform_square(2)
    u = P0Field.zeros(m)
    with pytest.raises(ValueError):
        u.values[0] = 1.0


def test_p0_rejects_nan():
    m = build_uniform_square(2)
    values = np.zeros(m.n_triangles)
    values[3] = np.nan
    with pytest.raises(ValueError):
        P0Field(m, values)
