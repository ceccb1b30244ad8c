from typing import Protocol, Sequence, Self
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np


class SignedFunction(Protocol):
    def evaluate(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @classmethod
    def empty(cls, degree: int, dim: int = 2) -> Self:
        return cls(np.zeros((0, dim)), np.zeros(0), degree)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def concat(self, other: "QuadRule") -> "QuadRule":
        return QuadRule(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            min(self.degree, other.degree),
        )


def _permutations(a: float, b: float, c: float) -> list[tuple[float, float, float]]:
    return sorted(set([(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]))


@lru_cache(maxsize=None)
def _reference_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and weights summing to one."""
    match degree:
        case 0 | 1:
            bary = [(1 / 3, 1 / 3, 1 / 3)]
            weights = [1.0]
        case 2:
            bary = _permutations(2 / 3, 1 / 6, 1 / 6)
            weights = [1 / 3] * 3
        case 3 | 4:
            # symmetric 6-point rule, degree 4, positive weights
            a, wa = 0.445948490915965, 0.223381589678011
            b, wb = 0.091576213509771, 0.109951743655322
            bary = _permutations(1 - 2 * a, a, a) + _permutations(1 - 2 * b, b, b)
            weights = [wa] * 3 + [wb] * 3
        case _:
            raise ValueError(f"unsupported triangle quadrature degree {degree}")
    return np.array(bary), np.array(weights)


def triangle_area(T: np.ndarray) -> float:
    """Signed area; positive for counter-clockwise vertices."""
    e1 = T[1] - T[0]
    e2 = T[2] - T[0]
    return 0.5 * float(e1[0] * e2[1] - e1[1] * e2[0])


def triangle_rule(T: Sequence[Sequence[float]], degree: int) -> QuadRule:
    tri = np.asarray(T, dtype=float)
    bary, weights = _reference_triangle(degree)
    return QuadRule(bary @ tri, abs(triangle_area(tri)) * weights, degree)


def clip_triangle(T: np.ndarray, values: np.ndarray) -> list[np.ndarray]:
    """
    Pieces of {phi_lin < 0} within T, phi_lin being the linear interpolant of the
    vertex `values`. Returns zero, one or two triangles.
    """
    inside = values < 0
    if inside.all():
        return [T]
    if not inside.any():
        return []

    poly = []
    for i in range(3):
        j = (i + 1) % 3
        if inside[i]:
            poly.append(T[i])
        if inside[i] != inside[j]:
            s = values[i] / (values[i] - values[j])
            if s <= 0.0:
                point = T[i]
            elif s >= 1.0:
                point = T[j]
            else:
                point = T[i] + s * (T[j] - T[i])
            if not poly or not np.array_equal(poly[-1], point):
                poly.append(point)

    # a zero vertex value can yield the same crossing twice
    if len(poly) > 1 and np.array_equal(poly[0], poly[-1]):
        poly.pop()

    pieces = [
        np.array([poly[0], poly[i], poly[i + 1]]) for i in range(1, len(poly) - 1)
    ]
    return [p for p in pieces if triangle_area(p) != 0.0]


def cut_rule_from_values(T: Sequence[Sequence[float]], values: np.ndarray, degree: int) -> QuadRule:
    tri = np.asarray(T, dtype=float)
    pieces = clip_triangle(tri, np.asarray(values, dtype=float))
    rule = QuadRule.empty(degree)
    for piece in pieces:
        rule = rule.concat(triangle_rule(piece, degree))
    return rule


def cut_rule(T: Sequence[Sequence[float]], phi: SignedFunction, degree: int) -> QuadRule:
    """Quadrature on T ∩ {phi < 0}, with phi linearized from its vertex values."""
    tri = np.asarray(T, dtype=float)
    return cut_rule_from_values(tri, phi.evaluate(tri), degree)


@lru_cache(maxsize=None)
def _gauss_legendre(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


MAX_FACET_DEGREE = 9


def facet_rule(F: Sequence[Sequence[float]], degree: int) -> QuadRule:
    """Gauss-Legendre rule on the whole segment F."""
    if degree < 0 or degree > MAX_FACET_DEGREE:
        raise ValueError(f"unsupported facet quadrature degree {degree}")
    seg = np.asarray(F, dtype=float)
    t, w = _gauss_legendre(max(1, math.ceil((degree + 1) / 2)))
    length = float(np.linalg.norm(seg[1] - seg[0]))
    points = seg[0][None, :] + t[:, None] * (seg[1] - seg[0])[None, :]
    return QuadRule(points, length * w, degree)
