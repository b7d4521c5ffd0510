"""
Degree-of-freedom numbering and the dual-primal classification.

Global numbering: u(node a, component c) = 2a + c, z(a, c) = 2*n_nodes + 2a + c,
p(triangle e) = 4*n_nodes + e.

Pressure labels count dimensions: per subdomain one dof is tagged
PRESSURE_CONSTANT (the area-weighted mean, Q_0) and the remaining ones
PRESSURE_INTERIOR (Q_I). The change of basis itself is applied by the
FETI-DP operator.

With edge averages, the normal u and z components along every subdomain edge
form one group; its first dof is relabelled PRIMAL and, after the change of
basis returned by DofMap.basis_change, carries the mean over the group.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from app.fem.mesh import ALL_SIDES, Mesh, Side, SubdomainPartition
from app.models.schemas import PrimalSpace
from app.utils.errors import InvalidArgumentError
from app.utils.logger import get_logger

logger = get_logger(__name__)


class DofClass(IntEnum):
    DIRICHLET = 0
    INTERIOR = 1
    DUAL = 2
    PRIMAL = 3
    PRESSURE_INTERIOR = 4
    PRESSURE_CONSTANT = 5


@dataclass(frozen=True)
class BoundarySpec:
    """Sides carrying essential conditions for u (Γ_d) and for z·n (Γ_f)."""

    displacement_sides: frozenset[Side] = ALL_SIDES
    flux_sides: frozenset[Side] = ALL_SIDES

    @property
    def is_closed(self) -> bool:
        """True when Γ_d = Γ_f = ∂Ω, so pressure is fixed only up to a constant."""
        return self.displacement_sides == ALL_SIDES and self.flux_sides == ALL_SIDES


@dataclass(frozen=True, eq=False)
class SubdomainDofs:
    """
    Free global dofs seen by one subdomain, in local order
    [interior u/z | pressures | primal | dual].
    """

    index: int
    triangles: np.ndarray
    interior: np.ndarray
    pressure: np.ndarray
    primal: np.ndarray
    dual: np.ndarray
    areas: np.ndarray = field(repr=False)

    @property
    def local_dofs(self) -> np.ndarray:
        return np.concatenate([self.interior, self.pressure, self.primal, self.dual])

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_pressure(self) -> int:
        return len(self.pressure)

    @property
    def n_primal(self) -> int:
        return len(self.primal)

    @property
    def n_dual(self) -> int:
        return len(self.dual)

    @property
    def n_local(self) -> int:
        return self.n_interior + self.n_pressure + self.n_primal + self.n_dual

    @property
    def pressure_constant_dim(self) -> int:
        return 1

    @property
    def pressure_interior_dim(self) -> int:
        return self.n_pressure - 1


@dataclass(frozen=True, eq=False)
class DofMap:
    n_nodes: int
    n_triangles: int
    boundary: BoundarySpec
    dof_class: np.ndarray
    multiplicity: np.ndarray
    dirichlet_dofs: np.ndarray
    free_dofs: np.ndarray
    primal_dofs: np.ndarray
    dual_dofs: np.ndarray
    # (n_dual, 2) owning subdomains of every dual dof, lower index first
    dual_pairs: np.ndarray
    subdomains: tuple[SubdomainDofs, ...]
    primal_space: PrimalSpace = PrimalSpace.VERTICES
    # sorted global dofs of one edge component each, the first one primal
    edge_groups: tuple[np.ndarray, ...] = ()

    @property
    def n_dofs(self) -> int:
        return 4 * self.n_nodes + self.n_triangles

    @property
    def n_displacement(self) -> int:
        return 2 * self.n_nodes

    @property
    def pressure_offset(self) -> int:
        return 4 * self.n_nodes

    def u_dof(self, node: int | np.ndarray, component: int) -> int | np.ndarray:
        return 2 * node + component

    def z_dof(self, node: int | np.ndarray, component: int) -> int | np.ndarray:
        return 2 * self.n_nodes + 2 * node + component

    def p_dof(self, triangle: int | np.ndarray) -> int | np.ndarray:
        return 4 * self.n_nodes + triangle

    def count(self, cls: DofClass) -> int:
        return int(np.count_nonzero(self.dof_class == cls))

    def has_pressure_kernel(self, storage: float) -> bool:
        return storage == 0.0 and self.boundary.is_closed

    def basis_change(self) -> sp.csr_matrix:
        """
        T with x = T x̂ over all dofs.

        For a group [d_0, d_1, .., d_k] x̂[d_0] is the group mean and x̂[d_j] the
        deviation of x[d_j] from it; x[d_0] = x̂[d_0] - Σ x̂[d_j]. Identity elsewhere.
        """
        rows, cols, vals = [np.arange(self.n_dofs)], [np.arange(self.n_dofs)], [np.ones(self.n_dofs)]
        for group in self.edge_groups:
            head, rest = group[0], group[1:]
            rows += [np.full(len(rest), head), rest]
            cols += [rest, np.full(len(rest), head)]
            vals += [-np.ones(len(rest)), np.ones(len(rest))]
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n_dofs, self.n_dofs)
        ).tocsr()


def constrained_dofs(mesh: Mesh, boundary: BoundarySpec) -> np.ndarray:
    """Global indices of the essential-condition dofs, sorted."""
    nn = mesh.n_nodes
    dofs: list[np.ndarray] = []
    for side in boundary.displacement_sides:
        nodes = mesh.nodes_on_side(side)
        dofs += [2 * nodes, 2 * nodes + 1]
    for side in boundary.flux_sides:
        nodes = mesh.nodes_on_side(side)
        # normal component only: z_x on vertical sides, z_y on horizontal ones
        component = 0 if side in (Side.LEFT, Side.RIGHT) else 1
        dofs.append(2 * nn + 2 * nodes + component)
    if not dofs:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(dofs)).astype(np.int64)


def edge_average_groups(mesh: Mesh, partition: SubdomainPartition, dof_class: np.ndarray) -> list[np.ndarray]:
    """
    Dual dofs of the normal u and z components, grouped per shared subdomain edge.

    An edge is the set of dual nodes owned by one pair of subdomains. Its nodes
    are not cross points, so exactly one lattice coordinate is a multiple of
    H/h: the column on vertical edges, the row on horizontal ones.
    """
    nn, s = mesh.n_nodes, partition.cells_per_subdomain
    owners: dict[int, list[int]] = {}
    for i, nodes in enumerate(partition.subdomain_nodes):
        for a in nodes:
            owners.setdefault(int(a), []).append(i)
    edges: dict[tuple[int, ...], list[int]] = {}
    dual_nodes = np.unique(np.flatnonzero(dof_class[: 4 * nn] == DofClass.DUAL) % (2 * nn) // 2)
    for a in dual_nodes:
        edges.setdefault(tuple(sorted(owners[int(a)])), []).append(int(a))

    groups: list[np.ndarray] = []
    for pair in sorted(edges):
        nodes = np.array(edges[pair], dtype=np.int64)
        normal = 0 if mesh.node_ij[nodes[0], 0] % s == 0 else 1
        for offset in (0, 2 * nn):
            dofs = offset + 2 * nodes + normal
            dofs = np.sort(dofs[dof_class[dofs] == DofClass.DUAL])
            if len(dofs):
                groups.append(dofs)
    return groups


def build_dofmap(
    mesh: Mesh,
    partition: SubdomainPartition,
    boundary: BoundarySpec | None = None,
    primal: PrimalSpace = PrimalSpace.EDGE_AVERAGES,
) -> DofMap:
    """Classify every scalar dof into Dirichlet / interior / dual / primal / pressure."""
    if partition.m != mesh.m:
        raise InvalidArgumentError(f"partition built for m={partition.m}, mesh has m={mesh.m}")
    boundary = boundary or BoundarySpec()
    nn, nt = mesh.n_nodes, mesh.n_triangles
    n_dofs = 4 * nn + nt

    node_mult = partition.node_multiplicity
    is_corner = np.zeros(nn, dtype=bool)
    is_corner[partition.corner_nodes] = True

    # owning node of every nodal dof (u then z, two components each)
    dof_node = np.tile(np.repeat(np.arange(nn), 2), 2)

    multiplicity = np.ones(n_dofs, dtype=np.int64)
    multiplicity[: 4 * nn] = node_mult[dof_node]

    dof_class = np.full(n_dofs, DofClass.INTERIOR, dtype=np.int8)
    shared = multiplicity[: 4 * nn] >= 2
    corner = is_corner[dof_node]
    dof_class[: 4 * nn][shared & corner] = DofClass.PRIMAL
    dof_class[: 4 * nn][shared & ~corner] = DofClass.DUAL

    dirichlet = constrained_dofs(mesh, boundary)
    dof_class[dirichlet] = DofClass.DIRICHLET

    groups: list[np.ndarray] = []
    if primal == PrimalSpace.EDGE_AVERAGES:
        groups = edge_average_groups(mesh, partition, dof_class)
        for group in groups:
            dof_class[group[0]] = DofClass.PRIMAL

    subdomains: list[SubdomainDofs] = []
    for i, (tri, nodes) in enumerate(zip(partition.subdomain_triangles, partition.subdomain_nodes, strict=True)):
        node_dofs = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1, 2 * nn + 2 * nodes, 2 * nn + 2 * nodes + 1]))
        cls = dof_class[node_dofs]
        p_dofs = 4 * nn + np.sort(tri)
        dof_class[p_dofs] = DofClass.PRESSURE_INTERIOR
        dof_class[p_dofs[0]] = DofClass.PRESSURE_CONSTANT
        subdomains.append(
            SubdomainDofs(
                index=i,
                triangles=np.sort(tri),
                interior=node_dofs[cls == DofClass.INTERIOR],
                pressure=p_dofs,
                primal=node_dofs[cls == DofClass.PRIMAL],
                dual=node_dofs[cls == DofClass.DUAL],
                areas=mesh.areas[np.sort(tri)],
            )
        )

    dual_dofs = np.flatnonzero(dof_class == DofClass.DUAL)
    bad = multiplicity[dual_dofs] != 2
    if np.any(bad):
        raise InvalidArgumentError(f"{int(bad.sum())} dual dofs do not have multiplicity 2")
    owners: dict[int, list[int]] = {int(d): [] for d in dual_dofs}
    for sub in subdomains:
        for d in sub.dual:
            owners[int(d)].append(sub.index)
    dual_pairs = np.array([sorted(owners[int(d)]) for d in dual_dofs], dtype=np.int64).reshape(-1, 2)

    dofmap = DofMap(
        n_nodes=nn,
        n_triangles=nt,
        boundary=boundary,
        dof_class=dof_class,
        multiplicity=multiplicity,
        dirichlet_dofs=dirichlet,
        free_dofs=np.flatnonzero(dof_class != DofClass.DIRICHLET),
        primal_dofs=np.flatnonzero(dof_class == DofClass.PRIMAL),
        dual_dofs=dual_dofs,
        dual_pairs=dual_pairs,
        subdomains=tuple(subdomains),
        primal_space=primal,
        edge_groups=tuple(groups),
    )
    logger.debug(
        f"Нумерация: {n_dofs} степеней свободы, {len(dirichlet)} Дирихле, {len(dofmap.primal_dofs)} первичных "
        f"({len(groups)} средних по ребрам), {len(dual_dofs)} дуальных"
    )
    return dofmap
