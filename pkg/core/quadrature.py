# core/quadrature.py

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on a triangle in barycentric coordinates; weights sum to 1"""
    name: str
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self):
        return len(self.weights)


def _rule(name, points, weights, degree):
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(name, points, weights, degree)


CENTROID = _rule("centroid", [[1 / 3, 1 / 3, 1 / 3]], [1.0], 1)

# midpoints of local edges (0,1), (1,2), (2,0)
EDGE_MIDPOINT = _rule(
    "edge_midpoint",
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    [1 / 3, 1 / 3, 1 / 3],
    2,
)

_A = 0.445948490915965
_B = 0.091576213509771
_WA = 0.223381589678011
_WB = 0.109951743655322

DEGREE4 = _rule(
    "degree4_6pt",
    [
        [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
        [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B],
    ],
    [_WA, _WA, _WA, _WB, _WB, _WB],
    4,
)


def split_barycentric(corners):
    """The four midpoint children of a triangle given by barycentric corners (3x3)"""
    a, b, c = corners
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [
        np.array([a, ab, ca]),
        np.array([ab, b, bc]),
        np.array([ca, bc, c]),
        np.array([ab, bc, ca]),
    ]


def composite_rule(rule, levels):
    """Apply `rule` on every child of `levels` uniform midpoint subdivisions"""
    if levels <= 0:
        return rule
    children = [np.eye(3)]
    for _ in range(levels):
        children = [child for tri in children for child in split_barycentric(tri)]
    points = np.concatenate([rule.points @ tri for tri in children])
    weights = np.tile(rule.weights, len(children)) / len(children)
    return _rule(f"{rule.name}_x{len(children)}", points, weights, rule.degree)


def physical_points(mesh, rule):
    """Coordinates of the rule's points on every element, shape (M, k, 2)"""
    corners = mesh.vertices[mesh.triangles]
    return np.einsum("kj,mjd->mkd", rule.points, corners)


def evaluate(func, mesh, rule):
    """Evaluate a vectorised callable f(x, y) at the rule's points, shape (M, k)"""
    pts = physical_points(mesh, rule)
    values = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    return np.broadcast_to(values, pts.shape[:2])


def integrate_elementwise(mesh, values, rule):
    """Per-element integrals from point values of shape (M, k)"""
    return mesh.areas * (np.asarray(values) @ rule.weights)
