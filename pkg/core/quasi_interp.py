# core/quasi_interp.py

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.fem import P0Field, P1Field, element_average, values_at
from core.quadrature import DEGREE4, composite_rule, split_barycentric
from utils.logger import log_event, log_metrics

ERROR_RULE = composite_rule(DEGREE4, 2)

# barycentric coordinates of vertices, edge midpoints and centroid
_SAMPLE_POINTS = np.array([
    [1, 0, 0], [0, 1, 0], [0, 0, 1],
    [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5],
    [1 / 3, 1 / 3, 1 / 3],
])


class Indicator:
    """Characteristic function of a set, with area fractions by adaptive subdivision"""

    levels = 4

    def contains(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return self.contains(np.asarray(x, dtype=float), np.asarray(y, dtype=float)).astype(float)

    def fractions(self, mesh, levels=None):
        """|T cap set| / |T| for every element"""
        levels = self.levels if levels is None else levels
        frac = np.zeros(mesh.n_triangles)
        corners = mesh.corners
        owner = np.arange(mesh.n_triangles)
        weight = np.ones(mesh.n_triangles)

        for depth in range(levels + 1):
            samples = np.einsum("kj,mjd->mkd", _SAMPLE_POINTS, corners)
            inside = self.contains(samples[..., 0], samples[..., 1])
            full = inside.all(axis=1)
            mixed = inside.any(axis=1) & ~full
            np.add.at(frac, owner[full], weight[full])
            if not np.any(mixed):
                break
            if depth == levels:
                pts = np.einsum("kj,mjd->mkd", DEGREE4.points, corners[mixed])
                share = self.contains(pts[..., 0], pts[..., 1]).astype(float) @ DEGREE4.weights
                np.add.at(frac, owner[mixed], weight[mixed] * share)
                break
            children = np.stack([np.einsum("ij,mjd->mid", sub, corners[mixed])
                                 for sub in split_barycentric(np.eye(3))], axis=1)
            corners = children.reshape(-1, 3, 2)
            owner = np.repeat(owner[mixed], 4)
            weight = np.repeat(weight[mixed] / 4.0, 4)
        return np.clip(frac, 0.0, 1.0)


@dataclass(frozen=True)
class DiskIndicator(Indicator):
    center: tuple = (0.5, 0.5)
    radius: float = 0.3

    def contains(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 < self.radius ** 2


@dataclass(frozen=True)
class HalfPlaneIndicator(Indicator):
    """{(x, y): normal . (x, y) < offset}; default is {x < 0.5}"""
    normal: tuple = (1.0, 0.0)
    offset: float = 0.5

    def contains(self, x, y):
        return self.normal[0] * x + self.normal[1] * y < self.offset


def _element_integrals(m, u, rule=DEGREE4):
    if isinstance(u, Indicator):
        return u.fractions(m) * m.areas
    if isinstance(u, P1Field):
        return element_average(u).values * m.areas
    if isinstance(u, P0Field):
        return u.values * m.areas
    return m.areas * (values_at(u, m, rule) @ rule.weights)


def project_p0(m, u, rule=DEGREE4):
    """Elementwise mean values, the P0 quasi-interpolant"""
    return P0Field(m, _element_integrals(m, u, rule) / m.areas)


def orthogonality_residual(m, u, rule=DEGREE4):
    """int_T (u - Pi_h u) per element"""
    integrals = _element_integrals(m, u, rule)
    means = project_p0(m, u, rule).values
    return integrals - m.areas * means


def weighted_quasi_interp_p1(m, u, rule=DEGREE4):
    """Coefficients int u phi_i / int phi_i over each vertex patch"""
    vals = values_at(u, m, rule)
    local = m.areas[:, None] * ((vals * rule.weights) @ rule.points)
    num = np.bincount(m.triangles.ravel(), weights=local.ravel(), minlength=m.n_vertices)
    den = np.bincount(m.triangles.ravel(), weights=np.repeat(m.areas / 3.0, 3), minlength=m.n_vertices)
    return P1Field(m, num / den)


def p1_l1_norm(y):
    """Exact L1 norm of a P1 field, splitting elements along the zero level line"""
    m = y.mesh
    v = y.coefficients[m.triangles]
    area = m.areas
    total = area * v.mean(axis=1)

    def tip(x, a, b):
        # int of the positive part when only the vertex with value x > 0 is positive
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, area * x ** 3 / (3.0 * (x - a) * (x - b)), 0.0)

    pos = v > 0
    k = pos.sum(axis=1)
    s = np.sort(v, axis=1)  # ascending
    plus = np.zeros(m.n_triangles)
    plus = np.where(k == 3, total, plus)
    plus = np.where(k == 1, tip(s[:, 2], s[:, 0], s[:, 1]), plus)
    plus = np.where(k == 2, total + tip(-s[:, 0], -s[:, 1], -s[:, 2]), plus)
    return float(np.sum(2.0 * plus - total))


def interp_errors(m, u, rule=ERROR_RULE):
    """(L1, L2) errors of u - Pi_h u"""
    if isinstance(u, Indicator):
        f = u.fractions(m)
        l1 = np.sum(2.0 * f * (1.0 - f) * m.areas)
        l2 = np.sqrt(np.sum(f * (1.0 - f) * m.areas))
        return float(l1), float(l2)
    means = project_p0(m, u).values
    diff = values_at(u, m, rule) - means[:, None]
    l1 = np.sum(m.areas * (np.abs(diff) @ rule.weights))
    l2 = np.sqrt(np.sum(m.areas * ((diff ** 2) @ rule.weights)))
    return float(l1), float(l2)


@dataclass
class InterpStudyResult:
    """Per-level interpolation errors and fitted convergence exponents"""
    levels: List[int]
    h: List[float]
    error_l1: List[float]
    error_l2: List[float]
    norm: str = "L1"
    exponent_l1: Optional[float] = None
    exponent_l2: Optional[float] = None
    label: str = ""

    @property
    def fitted_exponent(self):
        return self.exponent_l1 if self.norm == "L1" else self.exponent_l2

    def to_frame(self):
        return pd.DataFrame({
            "level": self.levels,
            "h": self.h,
            "error_L1": self.error_l1,
            "error_L2": self.error_l2,
            "fitted_exponent": [self.fitted_exponent] * len(self.levels),
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def fit_exponent(h, errors):
    """Least-squares slope of log(error) against log(h); None if any error vanishes"""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return None
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


def interp_error_study(meshes, u, norm="L1", jobs=1, label=""):
    """Errors of Pi_h u across a refinement ladder and the fitted rates"""
    if norm not in ("L1", "L2"):
        raise ValueError(f"norm must be 'L1' or 'L2', got {norm!r}")
    if len(meshes) < 3:
        raise ValueError(f"interpolation study needs at least 3 levels, got {len(meshes)}")
    h = [m.h for m in meshes]
    if any(b >= a for a, b in zip(h, h[1:])):
        raise ValueError("mesh sizes must strictly decrease along the ladder")

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        errors = list(pool.map(lambda m: interp_errors(m, u), meshes))

    result = InterpStudyResult(
        levels=[m.level for m in meshes],
        h=h,
        error_l1=[e[0] for e in errors],
        error_l2=[e[1] for e in errors],
        norm=norm,
        label=label,
    )
    result.exponent_l1 = fit_exponent(result.h, result.error_l1)
    result.exponent_l2 = fit_exponent(result.h, result.error_l2)
    log_metrics({"study": label or type(u).__name__, "h": result.h, "error_L1": result.error_l1,
                 "error_L2": result.error_l2, "exponent_L1": result.exponent_l1,
                 "exponent_L2": result.exponent_l2}, "interp_study")
    return result


if __name__ == "__main__":
    from core.mesh import refinement_ladder

    study = interp_error_study(refinement_ladder(8, 4), DiskIndicator(), label="disk")
    print(study.to_frame())
