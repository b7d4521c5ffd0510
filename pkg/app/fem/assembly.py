"""
Assembly of the time-discrete stabilized P1-P1-P0 poroelastic system.

With s = Δt/α the monolithic matrix in the (u, z, p) ordering is

    [ A_u   0      B₁ᵀ  ]
    [ 0     s A_z  s B₂ᵀ ]
    [ B₁    s B₂   -A_p ]

where A_p = (c₀/α) M_p + J. The Darcy row is scaled by s and the mass
balance row by -Δt, which makes the matrix symmetric.
"""

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from app.fem.dofmap import DofMap
from app.fem.elements import darcy_element_matrices, div_coupling_rows, elasticity_element_matrices
from app.fem.exact import ManufacturedSolution
from app.fem.mesh import Mesh, SubdomainPartition, subdomain_local_edges
from app.fem.quadrature import DEGREE_2, DEGREE_4
from app.models.schemas import ErrorNorms, ModelParams
from app.utils.errors import InvalidArgumentError
from app.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Nodal u and z, shape (n_nodes, 2), and element pressures, shape (n_triangles,)."""

    u: np.ndarray
    z: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh) -> "FieldState":
        return cls(np.zeros((mesh.n_nodes, 2)), np.zeros((mesh.n_nodes, 2)), np.zeros(mesh.n_triangles))

    @classmethod
    def from_vector(cls, x: np.ndarray, n_nodes: int) -> "FieldState":
        nu = 2 * n_nodes
        return cls(x[:nu].reshape(-1, 2).copy(), x[nu : 2 * nu].reshape(-1, 2).copy(), x[2 * nu :].copy())

    @classmethod
    def interpolate(cls, mesh: Mesh, solution: ManufacturedSolution, t: float) -> "FieldState":
        """Nodal interpolant of u and z, element means of p."""
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        qp = DEGREE_4.points(mesh.coordinates)
        p = solution.pressure(qp[..., 0], qp[..., 1], t) @ DEGREE_4.weights
        return cls(solution.displacement(x, y, t), solution.flux(x, y, t), p)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.z.ravel(), self.p])


def stabilization_matrix(
    mesh: Mesh, partition: SubdomainPartition | None, delta_stab: float
) -> sp.csr_matrix:
    """
    Pressure-jump stabilization J on the P0 space.

    Each counted edge e contributes 2 δ |e|² [[1, -1], [-1, 1]]: the sum over
    element boundaries visits every interior edge twice. Boundary edges and
    edges crossing a subdomain interface are skipped.
    """
    if delta_stab < 0.0:
        raise InvalidArgumentError(f"stabilization factor must be non-negative, got {delta_stab}")
    nt = mesh.n_triangles
    if partition is None:
        mask = mesh.interior_edge_mask
    else:
        mask = subdomain_local_edges(mesh, partition)
    left, right = mesh.edges[mask, 2], mesh.edges[mask, 3]
    weight = 2.0 * delta_stab * mesh.edge_lengths[mask] ** 2
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([left, right, right, left])
    vals = np.concatenate([weight, weight, -weight, -weight])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nt, nt))


@dataclass(eq=False)
class BlockSystem:
    """One time step of the twofold saddle-point system, on the full and the free dofs."""

    t: float
    time_scale: float
    A_u: sp.csr_matrix
    A_z: sp.csr_matrix
    A_p: sp.csr_matrix
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_values: np.ndarray
    free_dofs: np.ndarray
    dirichlet_dofs: np.ndarray
    reduced_matrix: sp.csr_matrix
    reduced_rhs: np.ndarray
    pressure_kernel: bool
    pressure_offset: int
    pressure_weights: np.ndarray
    subdomain_matrices: tuple[sp.csr_matrix, ...] = field(default=(), repr=False)

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full dof vector from free values plus the essential boundary data."""
        x = self.dirichlet_values.copy()
        x[self.free_dofs] = x_free
        return x

    def fix_pressure_gauge(self, x: np.ndarray) -> np.ndarray:
        """Shift pressures to zero area-weighted mean when the pressure level is free."""
        if not self.pressure_kernel:
            return x
        p = x[self.pressure_offset :]
        mean = float(p @ self.pressure_weights) / float(self.pressure_weights.sum())
        x = x.copy()
        x[self.pressure_offset :] = p - mean
        return x


class BiotAssembler:
    """
    Caches the element matrices of one (mesh, partition, parameters) triple.

    The matrix does not depend on the time level, so only the right-hand
    side is rebuilt per step.
    """

    def __init__(self, mesh: Mesh, partition: SubdomainPartition, dofmap: DofMap, params: ModelParams):
        if dofmap.n_nodes != mesh.n_nodes or dofmap.n_triangles != mesh.n_triangles:
            raise InvalidArgumentError("dof map does not match the mesh")
        self.mesh = mesh
        self.partition = partition
        self.dofmap = dofmap
        self.params = params
        self.solution = ManufacturedSolution(params)
        self.time_scale = params.dt / params.biot_alpha

        started = time.perf_counter()
        xy = mesh.coordinates
        self._ke = elasticity_element_matrices(xy, params.lam, params.mu)
        self._me = darcy_element_matrices(xy, params.permeability)
        self._be = div_coupling_rows(xy)
        self._storage = params.storage / params.biot_alpha * mesh.areas
        self._stab = stabilization_matrix(mesh, partition, params.delta_stab)

        nn = mesh.n_nodes
        vec = (2 * mesh.triangles[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 6)
        self._u_idx = vec
        self._z_idx = vec + 2 * nn
        self._p_idx = 4 * nn + np.arange(mesh.n_triangles)
        self.assembly_seconds = time.perf_counter() - started

    # ------------------------------------------------------------------ blocks

    def _scatter(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
        r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
        matrix = sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
        return matrix

    @cached_property
    def A_u(self) -> sp.csr_matrix:
        n = 2 * self.mesh.n_nodes
        return self._scatter(self._u_idx, self._u_idx, self._ke, (n, n))

    @cached_property
    def A_z(self) -> sp.csr_matrix:
        n = 2 * self.mesh.n_nodes
        return self._scatter(self._u_idx, self._u_idx, self._me, (n, n))

    @cached_property
    def B(self) -> sp.csr_matrix:
        nt = self.mesh.n_triangles
        rows = np.arange(nt)[:, None]
        return self._scatter(rows, self._u_idx, self._be[:, None, :], (nt, 2 * self.mesh.n_nodes))

    @cached_property
    def A_p(self) -> sp.csr_matrix:
        return (sp.diags(self._storage) + self._stab).tocsr()

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        s = self.time_scale
        B = self.B
        matrix = sp.bmat(
            [
                [self.A_u, None, B.T],
                [None, s * self.A_z, s * B.T],
                [B, s * B, -self.A_p],
            ],
            format="csr",
        )
        matrix.sort_indices()
        return matrix

    @cached_property
    def reduced_matrix(self) -> sp.csr_matrix:
        free = self.dofmap.free_dofs
        return self.matrix[free][:, free].tocsr()

    @cached_property
    def _lift_matrix(self) -> sp.csr_matrix:
        return self.matrix[self.dofmap.free_dofs][:, self.dofmap.dirichlet_dofs].tocsr()

    @cached_property
    def element_matrices(self) -> np.ndarray:
        """Scaled 13 x 13 element matrices in the local order [u (6), z (6), p]."""
        s = self.time_scale
        nt = self.mesh.n_triangles
        e = np.zeros((nt, 13, 13))
        e[:, :6, :6] = self._ke
        e[:, 6:12, 6:12] = s * self._me
        e[:, 12, :6] = self._be
        e[:, :6, 12] = self._be
        e[:, 12, 6:12] = s * self._be
        e[:, 6:12, 12] = s * self._be
        e[:, 12, 12] = -self._storage
        return e

    @cached_property
    def element_dofs(self) -> np.ndarray:
        return np.column_stack([self._u_idx, self._z_idx, self._p_idx])

    @cached_property
    def subdomain_matrices(self) -> tuple[sp.csr_matrix, ...]:
        """Subdomain stiffness over the free local dofs, in SubdomainDofs.local_dofs order."""
        g2l = np.full(self.dofmap.n_dofs, -1, dtype=np.int64)
        matrices = []
        for sub in self.dofmap.subdomains:
            local = sub.local_dofs
            g2l[local] = np.arange(len(local))
            tri = sub.triangles
            ldofs = g2l[self.element_dofs[tri]]
            vals = self.element_matrices[tri]
            r = np.broadcast_to(ldofs[:, :, None], vals.shape).ravel()
            c = np.broadcast_to(ldofs[:, None, :], vals.shape).ravel()
            keep = (r >= 0) & (c >= 0)
            n = len(local)
            k = sp.coo_matrix((vals.ravel()[keep], (r[keep], c[keep])), shape=(n, n)).tocsr()
            jp = self._stab[tri][:, tri].tocoo()
            lp = g2l[self._p_idx[tri]]
            k = k - sp.coo_matrix((jp.data, (lp[jp.row], lp[jp.col])), shape=(n, n)).tocsr()
            k.sum_duplicates()
            k.sort_indices()
            matrices.append(k)
            g2l[local] = -1
        return tuple(matrices)

    # --------------------------------------------------------------------- rhs

    def dirichlet_values(self, t: float) -> np.ndarray:
        """Exact u and the exact normal component of z on the constrained dofs."""
        x, y = self.mesh.nodes[:, 0], self.mesh.nodes[:, 1]
        full = np.zeros(self.dofmap.n_dofs)
        full[: 2 * self.mesh.n_nodes] = self.solution.displacement(x, y, t).ravel()
        full[2 * self.mesh.n_nodes : 4 * self.mesh.n_nodes] = self.solution.flux(x, y, t).ravel()
        values = np.zeros(self.dofmap.n_dofs)
        values[self.dofmap.dirichlet_dofs] = full[self.dofmap.dirichlet_dofs]
        return values

    def source_integrals(self, t: float) -> np.ndarray:
        """∫_K g₁ on every triangle (degree-2 rule)."""
        qp = DEGREE_2.points(self.mesh.coordinates)
        g = self.solution.source(qp[..., 0], qp[..., 1], t)
        return self.mesh.areas * (g @ DEGREE_2.weights)

    def full_rhs(self, t: float, prev: FieldState) -> np.ndarray:
        nn = self.mesh.n_nodes
        if prev.u.shape != (nn, 2) or prev.z.shape != (nn, 2) or prev.p.shape != (self.mesh.n_triangles,):
            raise InvalidArgumentError("previous state does not match the mesh dofs")
        f3 = -self.time_scale * self.source_integrals(t) + self.B @ prev.u.ravel() - self.A_p @ prev.p
        rhs = np.zeros(self.dofmap.n_dofs)
        rhs[4 * nn :] = f3
        return rhs

    def assemble(self, t: float, prev: FieldState) -> BlockSystem:
        started = time.perf_counter()
        dofmap = self.dofmap
        rhs = self.full_rhs(t, prev)
        g = self.dirichlet_values(t)
        reduced_rhs = rhs[dofmap.free_dofs] - self._lift_matrix @ g[dofmap.dirichlet_dofs]

        kernel = dofmap.has_pressure_kernel(self.params.storage)
        n_free_u = len(dofmap.free_dofs) - self.mesh.n_triangles
        if kernel:
            # orthogonal complement of the constant pressure vector
            reduced_rhs[n_free_u:] -= reduced_rhs[n_free_u:].mean()

        system = BlockSystem(
            t=t,
            time_scale=self.time_scale,
            A_u=self.A_u,
            A_z=self.A_z,
            A_p=self.A_p,
            B1=self.B,
            B2=self.B,
            matrix=self.matrix,
            rhs=rhs,
            dirichlet_values=g,
            free_dofs=dofmap.free_dofs,
            dirichlet_dofs=dofmap.dirichlet_dofs,
            reduced_matrix=self.reduced_matrix,
            reduced_rhs=reduced_rhs,
            pressure_kernel=kernel,
            pressure_offset=dofmap.pressure_offset,
            pressure_weights=self.mesh.areas,
            subdomain_matrices=self.subdomain_matrices,
        )
        elapsed = time.perf_counter() - started
        self.assembly_seconds += elapsed
        logger.debug(f"Сборка шага t={t:.5f}: {len(dofmap.free_dofs)} свободных неизвестных, {elapsed:.3f}s")
        return system


def assemble_time_step_system(
    mesh: Mesh,
    partition: SubdomainPartition,
    dofmap: DofMap,
    params: ModelParams,
    t_n: float,
    prev_state: FieldState,
) -> BlockSystem:
    """One-shot assembly; time loops should keep a BiotAssembler instead."""
    return BiotAssembler(mesh, partition, dofmap, params).assemble(t_n, prev_state)


def error_norms(solution: FieldState, mesh: Mesh, params: ModelParams, t: float) -> ErrorNorms:
    """L2 errors of (u, z, p) against the manufactured solution (degree-4 rule)."""
    if solution.u.shape != (mesh.n_nodes, 2) or solution.p.shape != (mesh.n_triangles,):
        raise InvalidArgumentError("solution does not match the mesh dofs")
    exact = ManufacturedSolution(params)
    qp = DEGREE_4.points(mesh.coordinates)
    qx, qy = qp[..., 0], qp[..., 1]
    weights = mesh.areas[:, None] * DEGREE_4.weights[None, :]

    def nodal_error(values: np.ndarray, reference: np.ndarray) -> float:
        at_qp = np.einsum("qk,tkd->tqd", DEGREE_4.barycentric, values[mesh.triangles])
        return float(np.sqrt(np.sum(weights[..., None] * (at_qp - reference) ** 2)))

    e_u = nodal_error(solution.u, exact.displacement(qx, qy, t))
    e_z = nodal_error(solution.z, exact.flux(qx, qy, t))
    e_p = float(np.sqrt(np.sum(weights * (solution.p[:, None] - exact.pressure(qx, qy, t)) ** 2)))
    return ErrorNorms(e_u=e_u, e_z=e_z, e_p=e_p)
