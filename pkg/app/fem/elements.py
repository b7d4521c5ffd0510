"""
Element matrices of the P1-P1-P0 discretization.

Local vector dofs are interleaved per vertex: index 2k + c is component c of
vertex k. Batched functions take coordinates of shape (n, 3, 2); the
single-triangle wrappers take (3, 2).
"""

import numpy as np

from app.utils.errors import InvalidArgumentError

_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_I2 = np.eye(2)


def triangle_geometry(coordinates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Areas and barycentric gradients of a batch of triangles.

    Returns:
        (areas of shape (n,), gradients of shape (n, 3, 2))
    """
    xy = np.asarray(coordinates, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    # b_k = y_{k+1} - y_{k+2}, c_k = x_{k+2} - x_{k+1}
    b = np.roll(y, -1, axis=-1) - np.roll(y, -2, axis=-1)
    c = np.roll(x, -2, axis=-1) - np.roll(x, -1, axis=-1)
    twice_area = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (x[..., 2] - x[..., 0]) * (y[..., 1] - y[..., 0])
    if np.any(twice_area <= 0.0):
        raise InvalidArgumentError("degenerate or clockwise triangle")
    grads = np.stack([b, c], axis=-1) / twice_area[..., None, None]
    return 0.5 * twice_area, grads


def _vector_gradients(grads: np.ndarray) -> np.ndarray:
    """(n, 3, 2) -> (n, 6): entry 2k + c is d(phi_k)/dx_c."""
    return grads.reshape(grads.shape[0], 6)


def elasticity_element_matrices(coordinates: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """mu (grad u, grad v) + (lam + mu)(div u, div v) on each triangle, shape (n, 6, 6)."""
    areas, grads = triangle_geometry(coordinates)
    laplace = areas[:, None, None] * np.einsum("nkd,nld->nkl", grads, grads)
    block = np.einsum("nkl,cd->nkcld", laplace, _I2).reshape(-1, 6, 6)
    g = _vector_gradients(grads)
    div_div = areas[:, None, None] * np.einsum("ni,nj->nij", g, g)
    return mu * block + (lam + mu) * div_div


def darcy_element_matrices(coordinates: np.ndarray, kappa: float) -> np.ndarray:
    """Vector P1 mass matrix scaled by 1/kappa, shape (n, 6, 6)."""
    if kappa <= 0.0:
        raise InvalidArgumentError(f"permeability must be positive, got {kappa}")
    areas, _ = triangle_geometry(coordinates)
    mass = np.kron(_P1_MASS, _I2)
    return areas[:, None, None] * mass[None] / kappa


def div_coupling_rows(coordinates: np.ndarray) -> np.ndarray:
    """-(q, div v) for the element P0 indicator q, shape (n, 6)."""
    areas, grads = triangle_geometry(coordinates)
    return -areas[:, None] * _vector_gradients(grads)


def elasticity_element_matrix(triangle: np.ndarray, lam: float, mu: float) -> np.ndarray:
    return elasticity_element_matrices(np.asarray(triangle, dtype=float)[None], lam, mu)[0]


def darcy_element_matrix(triangle: np.ndarray, kappa: float) -> np.ndarray:
    return darcy_element_matrices(np.asarray(triangle, dtype=float)[None], kappa)[0]


def div_coupling_row(triangle: np.ndarray) -> np.ndarray:
    return div_coupling_rows(np.asarray(triangle, dtype=float)[None])[0]
