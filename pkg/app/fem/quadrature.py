"""
Symmetric triangle quadrature rules in barycentric coordinates.

Weights are normalised to sum to one; multiply by the triangle area.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    degree: int
    barycentric: np.ndarray
    weights: np.ndarray

    def points(self, coordinates: np.ndarray) -> np.ndarray:
        """Physical quadrature points, shape (n_triangles, n_points, 2)."""
        return np.einsum("qk,tkd->tqd", self.barycentric, coordinates)


def _orbit(a: float, b: float) -> list[list[float]]:
    return [[a, b, b], [b, a, b], [b, b, a]]


DEGREE_2 = TriangleRule(
    degree=2,
    barycentric=np.array(_orbit(2.0 / 3.0, 1.0 / 6.0)),
    weights=np.full(3, 1.0 / 3.0),
)

DEGREE_4 = TriangleRule(
    degree=4,
    barycentric=np.array(_orbit(0.108103018168070, 0.445948490915965) + _orbit(0.816847572980459, 0.091576213509771)),
    weights=np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)
