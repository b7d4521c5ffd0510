"""
Structured triangulations of the unit square and their box partitions.

Node (i, j) sits at (i/m, j/m) and has index j*(m+1) + i. Cell (i, j) is
split by the diagonal from its lower-left to its upper-right corner into
triangles 2*(j*m + i) (below the diagonal) and 2*(j*m + i) + 1 (above).
"""

from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np

from app.utils.errors import InvalidArgumentError
from app.utils.logger import get_logger

logger = get_logger(__name__)


class Side(IntEnum):
    """Sides of the unit square; -1 tags interior edges."""

    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3


ALL_SIDES: frozenset[Side] = frozenset(Side)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured triangle mesh of [0, 1]^2 with m cells per side."""

    m: int
    nodes: np.ndarray
    triangles: np.ndarray
    # columns: node_a, node_b, left triangle, right triangle (-1 on the boundary)
    edges: np.ndarray
    boundary_edge_tags: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def node_ij(self) -> np.ndarray:
        """Integer lattice coordinates of every node, shape (n_nodes, 2)."""
        idx = np.arange(self.n_nodes)
        return np.column_stack([idx % (self.m + 1), idx // (self.m + 1)])

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (n_triangles, 3, 2)."""
        return self.nodes[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        xy = self.coordinates
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        delta = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(delta[:, 0], delta[:, 1])

    @property
    def interior_edge_mask(self) -> np.ndarray:
        return self.edges[:, 3] >= 0

    def nodes_on_side(self, side: Side) -> np.ndarray:
        """Indices of the nodes lying on one side of the square (corners included)."""
        i, j = self.node_ij[:, 0], self.node_ij[:, 1]
        mask = {
            Side.BOTTOM: j == 0,
            Side.RIGHT: i == self.m,
            Side.TOP: j == self.m,
            Side.LEFT: i == 0,
        }[side]
        return np.flatnonzero(mask)

    def dump_text(self, path: str | Path, partition: "SubdomainPartition | None" = None) -> None:
        """Write a plain-text node/element listing, one record per line."""
        owner = partition.subdomain_of_triangle if partition is not None else np.zeros(self.n_triangles, int)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# m={self.m} nodes={self.n_nodes} triangles={self.n_triangles}\n")
            for a, (x, y) in enumerate(self.nodes):
                f.write(f"node {a} {x:.17g} {y:.17g}\n")
            for e, (n0, n1, n2) in enumerate(self.triangles):
                f.write(f"tri {e} {n0} {n1} {n2} {owner[e]}\n")
        logger.debug(f"Сетка записана в {path}")


def build_structured_mesh(m: int) -> Mesh:
    """Triangulate [0, 1]^2 with m x m cells, two counter-clockwise triangles per cell."""
    if not isinstance(m, int | np.integer) or m < 1:
        raise InvalidArgumentError(f"elements per side must be a positive integer, got {m!r}")
    m = int(m)
    n1 = m + 1

    coords = np.linspace(0.0, 1.0, n1)
    xx, yy = np.meshgrid(coords, coords)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ci, cj = np.meshgrid(np.arange(m), np.arange(m))
    ci, cj = ci.ravel(), cj.ravel()
    n00 = cj * n1 + ci
    n10 = n00 + 1
    n01 = n00 + n1
    n11 = n01 + 1
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([n00, n10, n11])
    triangles[1::2] = np.column_stack([n00, n11, n01])

    edges, tags = _build_edges(triangles, n1)
    mesh = Mesh(m=m, nodes=nodes, triangles=triangles, edges=edges, boundary_edge_tags=tags)
    logger.debug(f"Сетка m={m}: {mesh.n_nodes} узлов, {mesh.n_triangles} треугольников, {len(edges)} ребер")
    return mesh


def _build_edges(triangles: np.ndarray, n1: int) -> tuple[np.ndarray, np.ndarray]:
    n_nodes = n1 * n1
    m = n1 - 1
    pairs = np.sort(triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(len(triangles)), 3)
    keys = pairs[:, 0] * n_nodes + pairs[:, 1]
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    unique_keys, first, counts = np.unique(keys_sorted, return_index=True, return_counts=True)

    left = owner[order[first]]
    second = np.minimum(first + 1, len(order) - 1)
    right = np.where(counts == 2, owner[order[second]], -1)
    a, b = unique_keys // n_nodes, unique_keys % n_nodes
    edges = np.column_stack([a, b, left, right]).astype(np.int64)

    ai, aj = a % n1, a // n1
    bi, bj = b % n1, b // n1
    tags = np.full(len(edges), -1, dtype=np.int64)
    boundary = right < 0
    tags[boundary & (aj == 0) & (bj == 0)] = Side.BOTTOM
    tags[boundary & (ai == m) & (bi == m)] = Side.RIGHT
    tags[boundary & (aj == m) & (bj == m)] = Side.TOP
    tags[boundary & (ai == 0) & (bi == 0)] = Side.LEFT
    return edges, tags


@dataclass(frozen=True, eq=False)
class SubdomainPartition:
    """Square nd x nd box partition of a structured mesh."""

    nd: int
    m: int
    subdomain_of_triangle: np.ndarray
    subdomain_triangles: tuple[np.ndarray, ...]
    subdomain_nodes: tuple[np.ndarray, ...]
    node_multiplicity: np.ndarray
    # Γ = (∪∂Ω_i) \ ∂Ω
    interface_nodes: np.ndarray
    # subdomain cross points, including those where an interface meets ∂Ω
    corner_nodes: np.ndarray
    node_on_boundary: np.ndarray = field(repr=False)
    # box position sj*nd+si -> subdomain id; None for the row-major numbering
    labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_subdomains(self) -> int:
        return self.nd * self.nd

    @property
    def cells_per_subdomain(self) -> int:
        return self.m // self.nd

    @property
    def interior_cross_points(self) -> np.ndarray:
        return self.corner_nodes[~self.node_on_boundary[self.corner_nodes]]

    @property
    def boundary_cross_points(self) -> np.ndarray:
        return self.corner_nodes[self.node_on_boundary[self.corner_nodes]]

    def subdomain_index(self, si: int, sj: int) -> int:
        box = sj * self.nd + si
        return box if self.labels is None else int(self.labels[box])

    def check_index(self, i: int) -> None:
        if not 0 <= i < self.n_subdomains:
            raise InvalidArgumentError(f"subdomain index {i} out of range [0, {self.n_subdomains})")


def build_partition(mesh: Mesh, nd: int) -> SubdomainPartition:
    """Split the mesh into nd x nd square subdomains of (m/nd)^2 cells each."""
    if nd < 1:
        raise InvalidArgumentError(f"subdomains per side must be positive, got {nd}")
    if mesh.m % nd != 0:
        raise InvalidArgumentError(f"subdomains per side {nd} does not divide elements per side {mesh.m}")
    s = mesh.m // nd

    cell = np.arange(mesh.n_triangles) // 2
    ci, cj = cell % mesh.m, cell // mesh.m
    owner = (cj // s) * nd + (ci // s)

    n_sub = nd * nd
    order = np.argsort(owner, kind="stable")
    sub_triangles = tuple(np.split(order, np.cumsum(np.bincount(owner, minlength=n_sub))[:-1]))
    sub_nodes = tuple(np.unique(mesh.triangles[tri]) for tri in sub_triangles)

    multiplicity = np.zeros(mesh.n_nodes, dtype=np.int64)
    for nodes in sub_nodes:
        multiplicity[nodes] += 1

    i, j = mesh.node_ij[:, 0], mesh.node_ij[:, 1]
    on_boundary = (i == 0) | (i == mesh.m) | (j == 0) | (j == mesh.m)
    shared = multiplicity >= 2
    interface = np.flatnonzero(shared & ~on_boundary)
    corners = np.flatnonzero(shared & (i % s == 0) & (j % s == 0))

    partition = SubdomainPartition(
        nd=nd,
        m=mesh.m,
        subdomain_of_triangle=owner,
        subdomain_triangles=sub_triangles,
        subdomain_nodes=sub_nodes,
        node_multiplicity=multiplicity,
        interface_nodes=interface,
        corner_nodes=corners,
        node_on_boundary=on_boundary,
    )
    logger.debug(
        f"Разбиение nd={nd}: {n_sub} подобластей, {len(interface)} узлов интерфейса, {len(corners)} угловых узлов"
    )
    return partition


def renumber_subdomains(partition: SubdomainPartition, permutation: np.ndarray | list[int]) -> SubdomainPartition:
    """Same boxes, subdomain i renamed permutation[i]."""
    permutation = np.asarray(permutation, dtype=np.int64)
    n_sub = partition.n_subdomains
    if permutation.shape != (n_sub,) or not np.array_equal(np.sort(permutation), np.arange(n_sub)):
        raise InvalidArgumentError(f"expected a permutation of {n_sub} subdomain ids")
    inverse = np.argsort(permutation)
    labels = np.arange(n_sub) if partition.labels is None else partition.labels
    return replace(
        partition,
        subdomain_of_triangle=permutation[partition.subdomain_of_triangle],
        subdomain_triangles=tuple(partition.subdomain_triangles[k] for k in inverse),
        subdomain_nodes=tuple(partition.subdomain_nodes[k] for k in inverse),
        labels=permutation[labels],
    )


def interior_edges_of_subdomain(mesh: Mesh, partition: SubdomainPartition, i: int) -> np.ndarray:
    """Indices of the edges whose two neighbouring triangles both lie in subdomain i."""
    partition.check_index(i)
    left, right = mesh.edges[:, 2], mesh.edges[:, 3]
    owner = partition.subdomain_of_triangle
    inside = right >= 0
    mask = np.zeros(len(mesh.edges), dtype=bool)
    mask[inside] = (owner[left[inside]] == i) & (owner[right[inside]] == i)
    return np.flatnonzero(mask)


def subdomain_local_edges(mesh: Mesh, partition: SubdomainPartition) -> np.ndarray:
    """Mask of interior edges not crossing a subdomain interface."""
    left, right = mesh.edges[:, 2], mesh.edges[:, 3]
    owner = partition.subdomain_of_triangle
    inside = right >= 0
    mask = np.zeros(len(mesh.edges), dtype=bool)
    mask[inside] = owner[left[inside]] == owner[right[inside]]
    return mask
