# test_ocp_solver.py

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from core.fem import P0Field, element_average
from core.mesh import build_uniform_square
from core.ocp_solver import (DcaSolver, DiscreteProblem, ProblemSpec, SolveOptions, beta_sparsity_sweep,
                             eval_cost, inner_solve_l1, kkt_from_arrays, kkt_residual, load_initial,
                             quadratic_growth_diagnostic, solve, structure_diagnostics, write_report)
from core.presets import paper_example
from core.scalar_reg import RegParams, dc_argmin, j_func
from core.utils.errors import ConfigError

EXAMPLE = ProblemSpec(yd=paper_example, yd_label="paper-example")


@pytest.fixture(scope="module")
def mesh16():
    return build_uniform_square(16)


@pytest.fixture(scope="module")
def example_report(mesh16):
    return solve(EXAMPLE, mesh16)


def _l1_objective(prob, u, g):
    """Convex auxiliary objective minimised by the inner solve"""
    p = prob.params
    a = prob.areas
    return (prob.tracking(prob.state(u)) + 0.5 * p.alpha * np.sum(a * u * u)
            + p.beta * p.delta_gamma * np.sum(a * np.abs(u)) - p.beta * np.sum(a * g * u))


# --- trivial problems ---

def test_zero_data_gives_zero_control():
    m = build_uniform_square(8)
    report = solve(ProblemSpec(), m)
    assert np.array_equal(report.u.values, np.zeros(m.n_triangles))
    assert report.outer_iterations == 1
    assert report.kkt_residual <= 1e-12
    assert report.cost == 0.0
    assert report.support_element_count == 0


def test_mesh_without_interior_vertices():
    m = build_uniform_square(1)
    report = solve(EXAMPLE, m)
    assert np.array_equal(report.u.values, np.zeros(2))
    assert report.y.satisfies_dirichlet()


# --- cost ---

def test_eval_cost_examples():
    m = build_uniform_square(4)
    spec = ProblemSpec(yd=1.0)
    assert eval_cost(spec, m, np.zeros(m.n_triangles)) == pytest.approx(0.5, rel=1e-14)

    p = spec.params
    u = np.full(m.n_triangles, 0.1)
    prob = DiscreteProblem(spec, m)
    expected = prob.tracking(prob.state(u)) + 0.5 * p.alpha * 0.01 + p.beta * np.sqrt(0.1 - p.shift)
    assert eval_cost(spec, m, P0Field(m, u)) == pytest.approx(expected, rel=1e-12)


def test_cost_without_sparsity_term():
    m = build_uniform_square(4)
    spec = ProblemSpec(params=RegParams(beta=0.0), yd=paper_example)
    prob = DiscreteProblem(spec, m)
    u = np.linspace(-0.5, 0.5, m.n_triangles)
    assert prob.cost(u) == pytest.approx(prob.tracking(prob.state(u)) + 0.12 * np.sum(prob.areas * u * u),
                                         rel=1e-13)


def test_one_dca_step_does_not_increase_cost():
    m = build_uniform_square(8)
    prob = DiscreteProblem(EXAMPLE, m)
    u0 = np.zeros(m.n_triangles)
    u_hat, _, _ = prob.inner_solve(j_func(u0, EXAMPLE.params), u0, SolveOptions())
    assert prob.cost(u_hat) <= prob.cost(u0) + 1e-12


# --- inner solve ---

def test_inner_solution_is_a_prox_fixed_point():
    m = build_uniform_square(6)
    prob = DiscreteProblem(EXAMPLE, m)
    g = np.random.default_rng(0).uniform(-1, 1, m.n_triangles) * EXAMPLE.params.delta_gamma
    u, iterations, trace = prob.inner_solve(g, np.zeros(m.n_triangles), SolveOptions())
    assert prob.inner_residual(u, g, prob.phi_bar(u)) <= 1e-10
    assert len(trace) == iterations + 1


def test_inner_solution_minimises_the_convex_problem():
    m = build_uniform_square(4)
    prob = DiscreteProblem(EXAMPLE, m)
    rng = np.random.default_rng(1)
    g = rng.uniform(-1, 1, m.n_triangles) * EXAMPLE.params.delta_gamma
    u = inner_solve_l1(EXAMPLE, m, P0Field(m, g)).values
    best = _l1_objective(prob, u, g)
    for _ in range(30):
        trial = prob.clip(u + 1e-3 * rng.standard_normal(u.shape))
        assert _l1_objective(prob, trial, g) >= best - 1e-14


def test_inner_solution_matches_proximal_gradient():
    m = build_uniform_square(4)
    prob = DiscreteProblem(EXAMPLE, m)
    p = EXAMPLE.params
    g = np.random.default_rng(2).uniform(-1, 1, m.n_triangles) * p.delta_gamma
    u_ssn = inner_solve_l1(EXAMPLE, m, g).values

    # forward-backward splitting in the area-weighted inner product
    t = 1.0 / (p.alpha + 1.0)
    u = np.zeros(m.n_triangles)
    for _ in range(2000):
        grad = prob.phi_bar(u) + p.alpha * u - p.beta * g
        z = u - t * grad
        u = np.clip(np.sign(z) * np.maximum(np.abs(z) - t * p.beta * p.delta_gamma, 0.0), p.u_a, p.u_b)
    assert np.max(np.abs(u - u_ssn)) <= 1e-7


def test_inner_methods_agree():
    m = build_uniform_square(6)
    g = np.random.default_rng(3).uniform(-1, 1, 2 * 36) * EXAMPLE.params.delta_gamma
    ssn = inner_solve_l1(EXAMPLE, m, g, opts=SolveOptions(inner_method="ssn")).values
    picard = inner_solve_l1(EXAMPLE, m, g, opts=SolveOptions(inner_method="picard")).values
    assert np.max(np.abs(ssn - picard)) <= 1e-9


def test_inner_solve_rejects_large_linear_term():
    m = build_uniform_square(2)
    g = np.full(m.n_triangles, 2 * EXAMPLE.params.delta_gamma)
    with pytest.raises(ValueError, match="delta_gamma"):
        inner_solve_l1(EXAMPLE, m, g)


# --- the example problem at n = 16 ---

def test_paper_example_converges(example_report):
    r = example_report
    assert r.converged
    assert r.kkt_residual <= 1e-9
    assert r.fixed_point_defect <= 1e-8
    assert r.outer_iterations >= 1
    assert r.total_inner_iterations >= 1


def test_cost_history_is_nonincreasing(example_report):
    history = np.array(example_report.cost_history)
    assert np.all(np.diff(history) <= 10 * SolveOptions().tol_inner)
    assert history[-1] < history[0]


def test_paper_example_structure(example_report):
    p = EXAMPLE.params
    u = example_report.u.values
    assert 0.0 < example_report.support_fraction < 1.0
    assert u.min() >= p.u_a and u.max() <= p.u_b
    diag = structure_diagnostics(example_report, p)
    assert diag.band_violations == 0
    assert diag.min_nonzero_abs >= p.jump_threshold * (1 - 1e-6)
    assert diag.support_count == example_report.support_element_count


def test_paper_example_is_pointwise_minimiser(example_report):
    pbar = element_average(example_report.phi).values
    assert np.max(np.abs(example_report.u.values - dc_argmin(pbar, EXAMPLE.params))) <= 1e-8


def test_report_fields_are_consistent(example_report, mesh16):
    p = EXAMPLE.params
    u = example_report.u.values
    assert np.array_equal(example_report.w.values, j_func(u, p))
    assert np.all(example_report.lambda_a.values >= 0) and np.all(example_report.lambda_b.values >= 0)
    assert np.all(example_report.lambda_a.values[u > p.u_a] == 0)
    assert np.all(example_report.lambda_b.values[u < p.u_b] == 0)
    assert np.all(np.abs(example_report.zeta.values) <= 1)
    assert np.array_equal(example_report.zeta.values[u != 0], np.sign(u[u != 0]))
    assert example_report.y.satisfies_dirichlet()
    assert kkt_residual(EXAMPLE, mesh16, example_report) == pytest.approx(example_report.kkt_residual,
                                                                      rel=1e-6, abs=1e-12)


def test_kkt_detects_perturbation(example_report, mesh16):
    p = EXAMPLE.params
    u = example_report.u.values.copy()
    pbar = element_average(example_report.phi).values
    k = int(np.argmax(np.abs(u) > 0) if np.any(u) else 0)
    u[k] += 1e-3 if u[k] < p.u_b else -1e-3
    assert kkt_from_arrays(p, mesh16.areas, u, pbar, j_func(u, p)) > 1e-6


def test_kkt_is_permutation_invariant(example_report, mesh16):
    p = EXAMPLE.params
    u = example_report.u.values
    pbar = element_average(example_report.phi).values
    w = j_func(u, p)
    perm = np.random.default_rng(4).permutation(len(u))
    a = kkt_from_arrays(p, mesh16.areas, u, pbar, w)
    b = kkt_from_arrays(p, mesh16.areas[perm], u[perm], pbar[perm], w[perm])
    assert b == pytest.approx(a, rel=1e-10, abs=1e-15)


def test_solve_is_deterministic(example_report, mesh16):
    again = solve(EXAMPLE, mesh16)
    assert np.array_equal(again.u.values, example_report.u.values)
    assert again.cost_history == example_report.cost_history


def test_warm_start_from_solution(example_report, mesh16):
    report = solve(EXAMPLE, mesh16, SolveOptions(initial=example_report.u))
    assert report.converged
    assert np.max(np.abs(report.u.values - example_report.u.values)) <= 1e-7


def test_warm_start_length_is_checked(mesh16):
    with pytest.raises(ConfigError, match="initial control"):
        solve(EXAMPLE, mesh16, SolveOptions(initial=np.zeros(3)))


# --- diagnostics ---

def test_structure_diagnostics_of_zero_control():
    m = build_uniform_square(4)
    report = solve(ProblemSpec(), m)
    diag = structure_diagnostics(report, RegParams())
    assert diag.support_count == 0
    assert diag.band_violations == 0
    assert diag.min_nonzero_abs is None
    assert diag.lower_margin is None


def test_structure_diagnostics_flags_band_value():
    m = build_uniform_square(4)
    report = solve(ProblemSpec(), m)
    p = RegParams()
    values = np.zeros(m.n_triangles)
    values[5] = 2.0 / p.gamma
    values[6] = -1.0 / (2.0 * p.gamma)
    values[7] = p.u_b
    diag = structure_diagnostics(replace(report, u=P0Field(m, values)), p)
    assert diag.band_violations == 1
    assert diag.core_support == 1
    assert diag.support_count == 3
    assert diag.threshold_margin < 1.0


def test_quadratic_growth_diagnostic(example_report, mesh16):
    result = quadratic_growth_diagnostic(EXAMPLE, mesh16, example_report, samples=8)
    assert result["samples"] == 8
    assert isinstance(result["sigma_min"], float)
    assert set(result) == {"samples", "radius", "sigma_min", "sigma_median", "growth_holds"}


def test_beta_sparsity_sweep():
    m = build_uniform_square(8)
    frame, monotone = beta_sparsity_sweep(EXAMPLE, m, factors=(1.0, 50.0))
    assert list(frame.columns) == ["beta", "support_fraction", "kkt_residual", "status"]
    assert frame["beta"].tolist() == pytest.approx([2e-4, 1e-2])
    assert isinstance(monotone, bool)


def test_reduced_hessian_is_symmetric_in_weighted_product():
    m = build_uniform_square(4)
    prob = DiscreteProblem(EXAMPLE, m)
    n = m.n_triangles
    H = np.column_stack([prob.apply_h(e) for e in np.eye(n)])
    DH = prob.areas[:, None] * H
    assert np.allclose(DH, DH.T, rtol=0, atol=1e-12 * np.abs(DH).max())
    assert np.linalg.eigvalsh(0.5 * (DH + DH.T)).min() >= -1e-14


# --- options and artifacts ---

@pytest.mark.parametrize("changes", [
    {"tol_outer": 0.0},
    {"max_inner": 0},
    {"damping": 0.0},
    {"damping": 1.5},
    {"inner_method": "bfgs"},
    {"switch_tol": -1.0},
    {"solve_method": "qr"},
])
def test_invalid_options(changes):
    with pytest.raises(ConfigError):
        SolveOptions(**changes)


def test_damped_solve_converges():
    m = build_uniform_square(8)
    report = DcaSolver(EXAMPLE, m, SolveOptions(damping=0.5)).run()
    assert report.converged


def test_cg_state_solves_reach_the_lu_optimum():
    m = build_uniform_square(8)
    lu = solve(EXAMPLE, m)
    cg = solve(EXAMPLE, m, SolveOptions(solve_method="cg"))
    assert cg.converged
    assert cg.cost == pytest.approx(lu.cost, rel=1e-8)
    assert cg.support_fraction == lu.support_fraction


def test_write_report_and_reload(example_report, mesh16, tmp_path):
    paths = write_report(example_report, tmp_path)
    assert set(paths) == {"elements", "history", "u", "y", "phi"}
    for path in paths.values():
        assert path.exists()
    frame = pd.read_csv(paths["elements"], float_precision="round_trip")
    assert list(frame.columns) == ["element", "barycenter_x", "barycenter_y", "u", "w", "zeta",
                                   "lambda_a", "lambda_b", "phi_bar"]
    assert np.array_equal(frame["u"].to_numpy(), example_report.u.values)
    history = pd.read_csv(paths["history"], float_precision="round_trip")
    assert history["cost"].tolist() == list(example_report.cost_history)

    reloaded = load_initial(paths["elements"], mesh16)
    assert np.array_equal(reloaded.values, example_report.u.values)


def test_write_report_csv_only(example_report, tmp_path):
    paths = write_report(example_report, tmp_path, prefix="q0.5_", formats=("csv",))
    assert set(paths) == {"elements", "history"}
    assert (tmp_path / "q0.5_elements.csv").exists()
    assert not (tmp_path / "q0.5_u.vtk").exists()


def test_load_initial_checks_shape(mesh16, tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"u": [0.0, 0.1]}).to_csv(path, index=False)
    with pytest.raises(ConfigError, match="rows"):
        load_initial(path, mesh16)
    pd.DataFrame({"v": [0.0]}).to_csv(path, index=False)
    with pytest.raises(ConfigError, match="'u' column"):
        load_initial(path, mesh16)


def test_load_initial_is_bit_exact(tmp_path):
    m = build_uniform_square(8)
    u = np.random.default_rng(3).uniform(-1.0, 2.0, m.n_triangles)
    path = tmp_path / "u.csv"
    pd.DataFrame({"u": u}).to_csv(path, index=False, float_format="%.17g")
    assert np.array_equal(load_initial(path, m).values, u)


def test_load_initial_reports_unreadable_files(mesh16, tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_initial(tmp_path / "missing.csv", mesh16)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_initial(empty, mesh16)
