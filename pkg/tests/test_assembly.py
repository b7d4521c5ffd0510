"""
Unit tests for the global and subdomain assembly of the poroelastic system.
"""

import os
import sys

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.fem.assembly import (
    BiotAssembler,
    FieldState,
    assemble_time_step_system,
    error_norms,
    stabilization_matrix,
)
from app.fem.dofmap import build_dofmap
from app.fem.exact import ManufacturedSolution
from app.fem.mesh import build_partition, build_structured_mesh
from app.solvers.linalg import is_symmetric
from app.utils.errors import InvalidArgumentError


def translation(n_nodes: int, component: int) -> np.ndarray:
    shift = np.zeros(2 * n_nodes)
    shift[component::2] = 1.0
    return shift


def off_diagonal_count(matrix: sp.spmatrix) -> int:
    rest = (matrix - sp.diags(matrix.diagonal())).tocsr()
    rest.eliminate_zeros()
    return rest.nnz


class TestStabilization:
    """Tests for the pressure-jump stabilization J."""

    @pytest.mark.unit
    def test_constants_in_kernel(self, mesh8, partition8):
        J = stabilization_matrix(mesh8, partition8, 100.0)
        np.testing.assert_allclose(J @ np.ones(mesh8.n_triangles), 0.0, atol=1e-12)
        assert is_symmetric(J)

    @pytest.mark.unit
    def test_cell_diagonal_weight(self, mesh8, partition8):
        """The shared diagonal of cell (0, 0) has |e|² = 2h², so J₀₁ = -2δ·2h²."""
        J = stabilization_matrix(mesh8, partition8, 100.0)
        assert J[0, 1] == pytest.approx(-2.0 * 100.0 * 2.0 / 64.0)

    @pytest.mark.unit
    def test_interface_edges_skipped(self, mesh8, partition8):
        """176 interior edges, 16 of which cross the 2x2 interface."""
        full = stabilization_matrix(mesh8, None, 1.0)
        local = stabilization_matrix(mesh8, partition8, 1.0)
        assert off_diagonal_count(full) == 2 * 176
        assert off_diagonal_count(local) == 2 * 160

    @pytest.mark.unit
    def test_single_subdomain_matches_global(self, mesh8):
        whole = build_partition(mesh8, 1)
        diff = stabilization_matrix(mesh8, whole, 3.0) - stabilization_matrix(mesh8, None, 3.0)
        assert abs(diff).max() == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.unit
    def test_single_cell(self):
        """m=1: one diagonal of length √2 gives J = 4δ [[1, -1], [-1, 1]]."""
        mesh = build_structured_mesh(1)
        np.testing.assert_allclose(stabilization_matrix(mesh, None, 1.0).toarray(), [[4.0, -4.0], [-4.0, 4.0]])
        assert stabilization_matrix(mesh, None, 0.0).count_nonzero() == 0

    @pytest.mark.unit
    def test_negative_delta(self, mesh8):
        with pytest.raises(InvalidArgumentError):
            stabilization_matrix(mesh8, None, -1.0)


class TestGlobalBlocks:
    """Tests for the blocks and the monolithic matrix."""

    @pytest.fixture
    def assembler(self, case8):
        return case8[3]

    @pytest.mark.unit
    def test_matrix_symmetric(self, assembler):
        assert is_symmetric(assembler.matrix)
        assert is_symmetric(assembler.reduced_matrix)

    @pytest.mark.unit
    def test_block_layout(self, assembler, mesh8):
        """Darcy block scaled by s = Δt/α; pressure block is -A_p."""
        nu = 2 * mesh8.n_nodes
        s = assembler.time_scale
        zz = assembler.matrix[nu : 2 * nu, nu : 2 * nu]
        assert abs(zz - s * assembler.A_z).max() == pytest.approx(0.0, abs=1e-12)
        pp = assembler.matrix[2 * nu :, 2 * nu :]
        assert abs(pp + assembler.A_p).max() == pytest.approx(0.0, abs=1e-12)
        assert assembler.matrix[:nu, nu : 2 * nu].nnz == 0

    @pytest.mark.unit
    def test_elasticity_translation_kernel(self, assembler, mesh8):
        for c in range(2):
            np.testing.assert_allclose(assembler.A_u @ translation(mesh8.n_nodes, c), 0.0, atol=1e-9)

    @pytest.mark.unit
    def test_divergence_of_linear_field(self, assembler, mesh8):
        """u = (x, 0) has div u = 1: B u = -|K| elementwise; translations give zero."""
        u = np.zeros(2 * mesh8.n_nodes)
        u[0::2] = mesh8.nodes[:, 0]
        np.testing.assert_allclose(assembler.B @ u, -mesh8.areas, atol=1e-14)
        np.testing.assert_allclose(assembler.B @ translation(mesh8.n_nodes, 1), 0.0, atol=1e-14)

    @pytest.mark.unit
    def test_darcy_total_mass(self, assembler, mesh8, compressible_params):
        """A constant unit flux has ∫ |z|²/κ = 1/κ over the unit square."""
        e = translation(mesh8.n_nodes, 0)
        assert e @ (assembler.A_z @ e) == pytest.approx(1.0 / compressible_params.permeability)

    @pytest.mark.unit
    def test_pure_stabilization_without_storage(self, assembler, mesh8, partition8):
        """c₀ = 0 leaves A_p = J."""
        J = stabilization_matrix(mesh8, partition8, 100.0)
        assert abs(assembler.A_p - J).max() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.unit
    def test_subdomain_matrices_sum_to_reduced(self, case8):
        """Σᵢ Rᵢᵀ Kᵢ Rᵢ reproduces the global free-dof matrix."""
        _, _, dofmap, assembler, system = case8
        n_free = len(dofmap.free_dofs)
        total = sp.csr_matrix((n_free, n_free))
        for sub, k in zip(dofmap.subdomains, assembler.subdomain_matrices, strict=True):
            positions = np.searchsorted(dofmap.free_dofs, sub.local_dofs)
            R = sp.csr_matrix((np.ones(sub.n_local), (np.arange(sub.n_local), positions)), shape=(sub.n_local, n_free))
            total = total + R.T @ k @ R
        diff = abs(total - system.reduced_matrix).max()
        assert diff <= 1e-10 * abs(system.reduced_matrix).max()

    @pytest.mark.unit
    def test_mismatched_dofmap(self, mesh8, compressible_params):
        mesh4 = build_structured_mesh(4)
        partition4 = build_partition(mesh4, 2)
        with pytest.raises(InvalidArgumentError):
            BiotAssembler(mesh8, build_partition(mesh8, 2), build_dofmap(mesh4, partition4), compressible_params)


class TestRightHandSide:
    """Tests for the per-step right-hand side and the Dirichlet lift."""

    @pytest.mark.unit
    def test_first_step_rhs(self, case8, compressible_params):
        """From a zero state only the mass-balance row carries -s ∫ g₁."""
        mesh, _, _, assembler, system = case8
        nu = 2 * mesh.n_nodes
        np.testing.assert_allclose(system.rhs[: 2 * nu], 0.0)
        expected = -assembler.time_scale * assembler.source_integrals(compressible_params.dt)
        np.testing.assert_allclose(system.rhs[2 * nu :], expected)

    @pytest.mark.unit
    def test_previous_state_enters(self, case8, rng):
        mesh, _, _, assembler, _ = case8
        prev = FieldState(rng.normal(size=(mesh.n_nodes, 2)), np.zeros((mesh.n_nodes, 2)), rng.normal(size=mesh.n_triangles))
        rhs = assembler.full_rhs(0.1, prev)
        base = assembler.full_rhs(0.1, FieldState.zeros(mesh))
        delta = rhs - base
        np.testing.assert_allclose(delta[4 * mesh.n_nodes :], assembler.B @ prev.u.ravel() - assembler.A_p @ prev.p)

    @pytest.mark.unit
    def test_bad_previous_state(self, case8):
        mesh, _, _, assembler, _ = case8
        with pytest.raises(InvalidArgumentError):
            assembler.full_rhs(0.1, FieldState.zeros(build_structured_mesh(4)))

    @pytest.mark.unit
    def test_dirichlet_values(self, case8):
        """Exact data on the constrained dofs, zero elsewhere."""
        mesh, _, dofmap, assembler, system = case8
        values = system.dirichlet_values
        assert np.all(values[dofmap.free_dofs] == 0.0)
        node = 3 * 9  # (0, 3/8) on the left side
        exact = ManufacturedSolution(assembler.params)
        u_x = exact.displacement(0.0, 0.375, system.t)[0]
        assert u_x != 0.0
        assert values[dofmap.u_dof(node, 0)] == pytest.approx(u_x)
        assert values[dofmap.z_dof(node, 0)] == pytest.approx(exact.flux(0.0, 0.375, system.t)[0])

    @pytest.mark.unit
    def test_reduced_pressure_rhs_has_zero_mean(self, system8, mesh8):
        """Closed boundary and c₀ = 0: the pressure rhs is projected off the constants."""
        assert system8.pressure_kernel
        assert system8.reduced_rhs[-mesh8.n_triangles :].sum() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.unit
    def test_storage_removes_kernel(self, mesh8, partition8, dofmap8, compressible_params):
        params = compressible_params.model_copy(update={"storage": 1e-3})
        system = BiotAssembler(mesh8, partition8, dofmap8, params).assemble(params.dt, FieldState.zeros(mesh8))
        assert not system.pressure_kernel
        assert system.A_p.diagonal().min() > 0.0

    @pytest.mark.unit
    def test_one_shot_assembly_matches(self, case8, compressible_params):
        mesh, partition, dofmap, _, system = case8
        again = assemble_time_step_system(
            mesh, partition, dofmap, compressible_params, compressible_params.dt, FieldState.zeros(mesh)
        )
        np.testing.assert_allclose(again.reduced_rhs, system.reduced_rhs)


class TestBlockSystemHelpers:
    """Tests for expand and fix_pressure_gauge."""

    @pytest.mark.unit
    def test_expand_keeps_boundary_data(self, system8, rng):
        x_free = rng.normal(size=len(system8.free_dofs))
        x = system8.expand(x_free)
        np.testing.assert_array_equal(x[system8.free_dofs], x_free)
        np.testing.assert_array_equal(x[system8.dirichlet_dofs], system8.dirichlet_values[system8.dirichlet_dofs])

    @pytest.mark.unit
    def test_gauge_fix(self, system8, rng):
        x = rng.normal(size=system8.n_dofs) + 5.0
        fixed = system8.fix_pressure_gauge(x)
        p = fixed[system8.pressure_offset :]
        assert p @ system8.pressure_weights == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(fixed[: system8.pressure_offset], x[: system8.pressure_offset])


class TestFieldState:
    """Tests for FieldState and the discrete error norms."""

    @pytest.mark.unit
    def test_vector_layout(self, mesh8, rng):
        x = rng.normal(size=4 * mesh8.n_nodes + mesh8.n_triangles)
        state = FieldState.from_vector(x, mesh8.n_nodes)
        assert state.u.shape == (mesh8.n_nodes, 2)
        assert state.p.shape == (mesh8.n_triangles,)
        np.testing.assert_array_equal(state.to_vector(), x)

    @pytest.mark.unit
    def test_interpolant_at_rest(self, mesh8, compressible_params):
        """At t = 0 both the interpolant and the exact solution vanish."""
        state = FieldState.interpolate(mesh8, ManufacturedSolution(compressible_params), 0.0)
        norms = error_norms(state, mesh8, compressible_params, 0.0)
        assert norms.e_u == norms.e_z == norms.e_p == 0.0

    @pytest.mark.unit
    def test_interpolation_error_decreases(self, compressible_params):
        """Nodal interpolants converge at O(h²), element means at O(h)."""
        solution = ManufacturedSolution(compressible_params)
        norms = []
        for m in (8, 16):
            mesh = build_structured_mesh(m)
            norms.append(error_norms(FieldState.interpolate(mesh, solution, 0.2), mesh, compressible_params, 0.2))
        coarse, fine = norms
        assert fine.e_u < 0.35 * coarse.e_u
        assert fine.e_z < 0.35 * coarse.e_z
        assert fine.e_p < 0.6 * coarse.e_p

    @pytest.mark.unit
    def test_error_norms_shape_check(self, mesh8, compressible_params):
        with pytest.raises(InvalidArgumentError):
            error_norms(FieldState.zeros(build_structured_mesh(4)), mesh8, compressible_params, 0.1)

    @pytest.mark.unit
    def test_zero_field_error_is_pressure_norm(self, compressible_params):
        """At t = 1/4 the zero field misses p by ‖sin 2πx sin 2πy‖ = 1/2."""
        mesh = build_structured_mesh(16)
        norms = error_norms(FieldState.zeros(mesh), mesh, compressible_params, 0.25)
        assert norms.e_p == pytest.approx(0.5, rel=1e-3)
