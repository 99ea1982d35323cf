# core/selftest.py

import os
import sys
import time

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.fem import P0Field, assemble_stiffness, l2_inner, solve_state
from core.mesh import build_uniform_square
from core.scalar_reg import (RegParams, dc_argmin, huber, j_func, jump_band_mask, penalty_density, psi,
                             soft_threshold)
from utils.logger import log_event, log_metrics


def random_params(rng):
    """A draw of regulariser parameters in the ranges the oracle checks use"""
    return RegParams(
        q=rng.uniform(0.2, 0.8),
        gamma=10 ** rng.uniform(3, 5),
        alpha=rng.uniform(0.05, 1.0),
        beta=10 ** rng.uniform(-5, -2),
        u_a=rng.uniform(-1.0, -0.2),
        u_b=rng.uniform(0.2, 1.0),
    )


def grid_argmin(phi_val, p, step=1e-5):
    grid = np.arange(p.u_a, p.u_b + step, step)
    grid = np.clip(np.append(grid, 0.0), p.u_a, p.u_b)
    values = psi(grid, phi_val, p)
    k = int(np.argmin(values))
    return float(grid[k]), float(values[k])


def check_argmin_oracle(draws, seed=0, step=1e-5):
    """Count draws where dc_argmin disagrees with grid search beyond 1e-4 (near-ties excepted)"""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(draws):
        p = random_params(rng)
        phi_val = rng.uniform(-1.0, 1.0)
        u = float(dc_argmin(phi_val, p)[0])
        u_grid, v_grid = grid_argmin(phi_val, p, step)
        v = float(psi(u, phi_val, p))
        better = v <= v_grid + 1e-12
        close = abs(u - u_grid) <= 1e-4 or abs(v - v_grid) <= 1e-9
        failures += int(not (better and close))
    return failures


def check_jump_band(draws, seed=0, samples=500):
    """Minimisers of psi inside the jump band, over random parameters and phi"""
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(draws):
        p = random_params(rng)
        u = dc_argmin(rng.uniform(-1.0, 1.0, samples), p)
        violations += int(np.sum(jump_band_mask(u, p)))
    return violations


def check_j_properties(pairs, seed=0):
    """Violations of |j| <= delta_gamma and of the Lipschitz bound over random pairs"""
    rng = np.random.default_rng(seed)
    violations = 0
    for q in (0.31, 0.5):
        for gamma in (1e3, 16000.0):
            p = RegParams(q=q, gamma=gamma)
            scale = 10.0 / gamma
            t1 = rng.uniform(-1, 1, pairs) * np.where(rng.random(pairs) < 0.5, scale, 1.0)
            t2 = t1 + rng.normal(0, scale, pairs)
            j1, j2 = j_func(t1, p), j_func(t2, p)
            violations += int(np.sum(np.abs(j1) > p.delta_gamma * (1 + 1e-12)))
            gap = np.abs(j1 - j2) - p.lipschitz_j * np.abs(t1 - t2)
            violations += int(np.sum(gap > 1e-9 * p.delta_gamma))
    return violations


def _suite(quick):
    p = RegParams()
    t = 1.0 / p.gamma
    rng = np.random.default_rng(7)
    inside = p.q * p.gamma ** ((1 - p.q) / p.q) * t ** (1 / p.q)
    yield "huber_continuity", abs(inside - (t - p.shift)) <= 1e-15 and abs(huber(t, p) - 3.125e-5) <= 1e-15
    samples = rng.uniform(-2, 2, 1000)
    yield "huber_even", bool(np.all(huber(samples, p) == huber(-samples, p)))
    grid = np.linspace(0, 2, 2001)
    yield "penalty_monotone", bool(np.all(np.diff(penalty_density(grid, p)) >= 0))
    yield "j_odd", bool(np.all(j_func(-samples, p) == -j_func(samples, p)))
    yield "j_bound_lipschitz", check_j_properties(10 ** 4 if quick else 10 ** 5) == 0

    ys, taus = rng.uniform(-2, 2, 100), rng.uniform(0, 1, 100)
    ok = True
    for y, tau in zip(ys, taus):
        g = np.arange(-3, 3, 1e-4)
        best = g[np.argmin(0.5 * (y - g) ** 2 + tau * np.abs(g))]
        ok &= abs(soft_threshold(y, tau) - best) <= 2e-4
    yield "soft_threshold_oracle", bool(ok)

    yield "dc_argmin_oracle", check_argmin_oracle(100 if quick else 1000) == 0
    yield "dc_argmin_jump_band", check_jump_band(50 if quick else 300) == 0
    phis = rng.uniform(-1, 1, 200)
    mirrored = p.replace(u_a=-p.u_b, u_b=-p.u_a)
    yield "dc_argmin_odd", bool(np.allclose(dc_argmin(-phis, mirrored), -dc_argmin(phis, p), atol=1e-12))

    m = build_uniform_square(2)
    yield "stiffness_n2", abs(assemble_stiffness(m).matrix.toarray()[0, 0] - 4.0) <= 1e-12

    m = build_uniform_square(8)
    u = P0Field(m, rng.standard_normal(m.n_triangles))
    v = P0Field(m, rng.standard_normal(m.n_triangles))
    lhs = l2_inner(solve_state(m, u), v)
    rhs = l2_inner(u, solve_state(m, v))
    yield "adjoint_consistency", abs(lhs - rhs) <= 1e-10


def run_selftest(quick=False):
    """Run the property suites; returns {name: passed}"""
    start = time.time()
    results = {}
    for name, passed in _suite(quick):
        results[name] = bool(passed)
        log_event("selftest_check", {"check": name, "passed": bool(passed)},
                  "INFO" if passed else "ERROR")
    log_metrics({"passed": sum(results.values()), "total": len(results),
                 "seconds": round(time.time() - start, 3)}, "selftest")
    return results


if __name__ == "__main__":
    for check, ok in run_selftest(quick=True).items():
        print(f"{'✅' if ok else '❌'} {check}")
