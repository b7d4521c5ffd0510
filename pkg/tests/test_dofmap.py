"""
Unit tests for dof numbering and the dual-primal classification.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.fem.dofmap import BoundarySpec, DofClass, build_dofmap, constrained_dofs
from app.fem.mesh import Side, build_partition, build_structured_mesh
from app.models.schemas import PrimalSpace
from app.utils.errors import InvalidArgumentError


class TestDofMap:
    """Tests for build_dofmap on the closed-boundary test problem."""

    @pytest.mark.unit
    def test_global_numbering(self, dofmap8):
        """u, z interleaved per node, then one pressure per triangle."""
        assert dofmap8.n_dofs == 4 * 81 + 128
        assert dofmap8.u_dof(10, 1) == 21
        assert dofmap8.z_dof(10, 0) == 2 * 81 + 20
        assert dofmap8.p_dof(5) == 4 * 81 + 5

    @pytest.mark.unit
    def test_dirichlet_count(self, dofmap8):
        """All boundary u dofs plus the normal z component on every side."""
        # 32 boundary nodes x 2 u components + 4 sides x 9 nodes x 1 z component
        assert dofmap8.count(DofClass.DIRICHLET) == 64 + 36
        assert len(dofmap8.free_dofs) == dofmap8.n_dofs - 100

    @pytest.mark.unit
    def test_vertex_primal_and_dual_counts(self, mesh8, partition8):
        """Center cross point: u and z primal; boundary cross points: tangential z primal."""
        dofmap = build_dofmap(mesh8, partition8, primal=PrimalSpace.VERTICES)
        assert dofmap.count(DofClass.PRIMAL) == 4 + 4
        assert dofmap.count(DofClass.DUAL) == 12 * 4
        assert np.all(dofmap.multiplicity[dofmap.dual_dofs] == 2)
        assert dofmap.edge_groups == ()

    @pytest.mark.unit
    def test_edge_average_counts(self, dofmap8):
        """Four edges of three nodes: one primal mean each for u·n and z·n."""
        assert dofmap8.primal_space == PrimalSpace.EDGE_AVERAGES
        assert len(dofmap8.edge_groups) == 8
        assert all(len(group) == 3 for group in dofmap8.edge_groups)
        assert dofmap8.count(DofClass.PRIMAL) == 8 + 8
        assert dofmap8.count(DofClass.DUAL) == 48 - 8
        assert np.all(dofmap8.multiplicity[dofmap8.dual_dofs] == 2)

    @pytest.mark.unit
    def test_edge_groups_hold_normal_components(self, dofmap8, mesh8):
        """Vertical edges group x components, horizontal edges y components."""
        nn = mesh8.n_nodes
        for group in dofmap8.edge_groups:
            assert dofmap8.dof_class[group[0]] == DofClass.PRIMAL
            assert np.all(dofmap8.dof_class[group[1:]] == DofClass.DUAL)
            nodes = group % (2 * nn) // 2
            component = int(group[0] % 2)
            assert np.all(group % 2 == component)
            if component == 0:
                assert np.all(mesh8.node_ij[nodes, 0] == 4)
            else:
                assert np.all(mesh8.node_ij[nodes, 1] == 4)

    @pytest.mark.unit
    def test_single_node_edges(self):
        """H/h=2: every normal component on an edge becomes a primal mean of itself."""
        mesh = build_structured_mesh(4)
        dofmap = build_dofmap(mesh, build_partition(mesh, 2))
        assert len(dofmap.edge_groups) == 8
        assert all(len(group) == 1 for group in dofmap.edge_groups)
        # only the tangential components remain dual
        assert dofmap.count(DofClass.DUAL) == 4 * 2

    @pytest.mark.unit
    def test_basis_change_carries_edge_means(self, dofmap8, rng):
        basis = dofmap8.basis_change()
        x_hat = rng.normal(size=dofmap8.n_dofs)
        x = basis @ x_hat
        grouped = np.zeros(dofmap8.n_dofs, dtype=bool)
        for group in dofmap8.edge_groups:
            assert x[group].mean() == pytest.approx(x_hat[group[0]])
            np.testing.assert_allclose(x[group[1:]] - x_hat[group[0]], x_hat[group[1:]])
            grouped[group] = True
        np.testing.assert_array_equal(x[~grouped], x_hat[~grouped])
        assert np.linalg.matrix_rank(basis.toarray()) == dofmap8.n_dofs

    @pytest.mark.unit
    def test_pressure_labels(self, dofmap8):
        """One constant-pressure label per subdomain."""
        assert dofmap8.count(DofClass.PRESSURE_CONSTANT) == 4
        assert dofmap8.count(DofClass.PRESSURE_INTERIOR) == 128 - 4
        for sub in dofmap8.subdomains:
            assert sub.pressure_constant_dim == 1
            assert sub.pressure_interior_dim == 31

    @pytest.mark.unit
    def test_subdomain_local_order(self, dofmap8):
        """Local dofs are [interior | pressures | primal | dual] with no Dirichlet entries."""
        for sub in dofmap8.subdomains:
            local = sub.local_dofs
            assert len(local) == sub.n_local
            classes = dofmap8.dof_class[local]
            assert np.all(classes[: sub.n_interior] == DofClass.INTERIOR)
            assert np.all(classes[sub.n_interior + sub.n_pressure + sub.n_primal :] == DofClass.DUAL)
            assert not np.any(classes == DofClass.DIRICHLET)

    @pytest.mark.unit
    def test_dual_pairs_are_ordered(self, dofmap8):
        """Each dual dof is owned by exactly two subdomains, lower index first."""
        assert dofmap8.dual_pairs.shape == (40, 2)
        assert np.all(dofmap8.dual_pairs[:, 0] < dofmap8.dual_pairs[:, 1])

    @pytest.mark.unit
    def test_free_dofs_counted_once_per_owner(self, dofmap8):
        """Summing local sizes counts every free dof by its multiplicity."""
        total = sum(sub.n_local for sub in dofmap8.subdomains)
        expected = int(dofmap8.multiplicity[dofmap8.free_dofs].sum())
        assert total == expected

    @pytest.mark.unit
    def test_pressure_kernel(self, dofmap8):
        """Closed boundary with c0 = 0 leaves constants in the pressure kernel."""
        assert dofmap8.boundary.is_closed
        assert dofmap8.has_pressure_kernel(0.0)
        assert not dofmap8.has_pressure_kernel(1e-3)

    @pytest.mark.unit
    def test_open_boundary_frees_boundary_cross_points(self, mesh8, partition8):
        """Without essential u on the bottom side the cross point u dofs become primal."""
        boundary = BoundarySpec(displacement_sides=frozenset({Side.LEFT, Side.RIGHT, Side.TOP}))
        dofmap = build_dofmap(mesh8, partition8, boundary)
        assert not dofmap.has_pressure_kernel(0.0)
        bottom_cross = 4
        assert dofmap.dof_class[dofmap.u_dof(bottom_cross, 0)] == DofClass.PRIMAL
        assert dofmap.dof_class[dofmap.u_dof(bottom_cross, 1)] == DofClass.PRIMAL

    @pytest.mark.unit
    def test_constrained_dofs_normal_component(self, mesh8):
        """On the left side only z_x is constrained."""
        dofs = constrained_dofs(mesh8, BoundarySpec(frozenset(), frozenset({Side.LEFT})))
        assert len(dofs) == 9
        assert np.all((dofs - 2 * 81) % 2 == 0)

    @pytest.mark.unit
    def test_single_subdomain(self, mesh8):
        """nd=1: no primal or dual dofs."""
        dofmap = build_dofmap(mesh8, build_partition(mesh8, 1))
        assert dofmap.count(DofClass.PRIMAL) == 0
        assert dofmap.count(DofClass.DUAL) == 0
        assert len(dofmap.subdomains) == 1

    @pytest.mark.unit
    def test_partition_mesh_mismatch(self, partition8):
        with pytest.raises(InvalidArgumentError):
            build_dofmap(build_structured_mesh(4), partition8)
