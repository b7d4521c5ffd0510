"""
Unit tests for the sparse linear algebra layer: triplet assembly,
symmetric indefinite factorization and preconditioned CG.
"""

import os
import sys

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.solvers.linalg import (
    PcgReport,
    SymmetricIndefiniteFactorization,
    csr_from_coo,
    csr_from_triplets,
    factorize_symmetric_indefinite,
    is_symmetric,
    bordered,
    pcg,
    symmetric_equilibration,
    write_matrix_market,
)
from app.utils.errors import InvalidArgumentError, PcgBreakdownError, SingularMatrixError


def saddle_point_matrix(rng: np.random.Generator) -> sp.csr_matrix:
    """[[A, Bᵀ], [B, 0]] with A 6x6 SPD and B 3x6 of full rank."""
    g = rng.normal(size=(6, 6))
    a = g @ g.T + 6.0 * np.eye(6)
    b = rng.normal(size=(3, 6))
    return sp.csr_matrix(np.block([[a, b.T], [b, np.zeros((3, 3))]]))


class TestTriplets:
    """Tests for csr_from_triplets."""

    @pytest.mark.unit
    def test_duplicates_are_summed(self):
        matrix = csr_from_triplets(2, 3, [0, 0, 1], [2, 2, 0], [1.0, 2.5, -1.0])
        np.testing.assert_allclose(matrix.toarray(), [[0.0, 0.0, 3.5], [-1.0, 0.0, 0.0]])
        assert matrix.has_sorted_indices

    @pytest.mark.unit
    def test_symmetric_flag(self):
        csr_from_triplets(2, 2, [0, 1], [1, 0], [1.0, 1.0], symmetric=True)
        with pytest.raises(InvalidArgumentError):
            csr_from_triplets(2, 2, [0, 1], [1, 0], [1.0, 2.0], symmetric=True)

    @pytest.mark.unit
    def test_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            csr_from_triplets(2, 2, [0, 2], [0, 0], [1.0, 1.0])

    @pytest.mark.unit
    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            csr_from_triplets(2, 2, [0, 1], [0], [1.0, 1.0])

    @pytest.mark.unit
    def test_empty(self):
        matrix = csr_from_triplets(0, 0, [], [], [])
        assert matrix.shape == (0, 0)
        assert is_symmetric(matrix)

    @pytest.mark.unit
    def test_from_coo(self):
        coo = sp.coo_matrix(([1.0, 1.0], ([0, 0], [1, 1])), shape=(2, 2))
        assert csr_from_coo(coo)[0, 1] == 2.0


class TestFactorization:
    """Tests for SymmetricIndefiniteFactorization."""

    @pytest.mark.unit
    def test_solves_saddle_point(self, rng):
        matrix = saddle_point_matrix(rng)
        x = rng.normal(size=9)
        factorization = factorize_symmetric_indefinite(matrix, label="saddle")
        np.testing.assert_allclose(factorization.solve(matrix @ x), x, rtol=1e-10)

    @pytest.mark.unit
    def test_inertia(self, rng):
        """Sylvester: n_A positive and n_B negative eigenvalues."""
        assert factorize_symmetric_indefinite(saddle_point_matrix(rng)).inertia == (6, 3, 0)

    @pytest.mark.unit
    def test_multiple_right_hand_sides(self, rng):
        matrix = saddle_point_matrix(rng)
        x = rng.normal(size=(9, 4))
        solved = SymmetricIndefiniteFactorization(matrix).solve(matrix @ x)
        assert solved.shape == (9, 4)
        np.testing.assert_allclose(solved, x, rtol=1e-10)

    @pytest.mark.unit
    def test_two_by_two(self):
        factorization = SymmetricIndefiniteFactorization(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(factorization.solve(np.array([3.0, 3.0])), [1.0, 1.0], rtol=1e-14)

    @pytest.mark.unit
    def test_rank_deficient(self):
        with pytest.raises(SingularMatrixError):
            SymmetricIndefiniteFactorization(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]))

    @pytest.mark.unit
    def test_exactly_singular(self):
        with pytest.raises(SingularMatrixError) as exc_info:
            SymmetricIndefiniteFactorization(sp.diags([1.0, 0.0, 2.0]).tocsr(), label="K_rr[0]")
        assert exc_info.value.size == 3
        assert "K_rr[0]" in str(exc_info.value)

    @pytest.mark.unit
    def test_numerically_singular(self):
        """Rank 2: the third row is 2·row1 - row0 up to round-off."""
        matrix = sp.csr_matrix(np.array([[1.0, 2.0, 3.0], [2.0, 5.0, 8.0], [3.0, 8.0, 13.0]]))
        with pytest.raises(SingularMatrixError):
            SymmetricIndefiniteFactorization(matrix)

    @pytest.mark.unit
    def test_tiny_diagonal_is_not_singular(self):
        """Equilibration rescales a lone small diagonal entry to one."""
        factorization = SymmetricIndefiniteFactorization(sp.diags([1.0, 1e-20, 1.0]).tocsr())
        np.testing.assert_allclose(factorization.solve(np.array([1.0, 1e-20, 2.0])), [1.0, 1.0, 2.0], rtol=1e-12)

    @pytest.mark.unit
    def test_badly_scaled_saddle_point(self, rng):
        """Blocks six orders apart with a tiny negative pressure block still factor accurately."""
        matrix = saddle_point_matrix(rng).toarray()
        matrix[:6, :6] *= 1e6
        matrix[6:, 6:] = -1e-9 * np.eye(3)
        matrix = sp.csr_matrix(matrix)
        x = rng.normal(size=9)
        factorization = SymmetricIndefiniteFactorization(matrix, label="scaled")
        np.testing.assert_allclose(factorization.solve(matrix @ x), x, rtol=1e-7, atol=1e-9)
        assert factorization.inertia == (6, 3, 0)

    @pytest.mark.unit
    def test_equilibration_unit_rows(self, rng):
        matrix = saddle_point_matrix(rng).toarray()
        matrix[:6, :6] *= 1e8
        s = symmetric_equilibration(sp.csr_matrix(matrix), sweeps=30)
        scaled = np.abs(s[:, None] * matrix * s[None, :])
        np.testing.assert_allclose(scaled.max(axis=1), 1.0, atol=2e-2)

    @pytest.mark.unit
    def test_equilibration_keeps_empty_rows(self):
        s = symmetric_equilibration(sp.diags([4.0, 0.0]).tocsr())
        np.testing.assert_allclose(s, [0.5, 1.0])

    @pytest.mark.unit
    def test_empty_matrix(self):
        factorization = SymmetricIndefiniteFactorization(sp.csr_matrix((0, 0)))
        assert factorization.solve(np.zeros(0)).shape == (0,)
        assert factorization.inertia == (0, 0, 0)

    @pytest.mark.unit
    def test_rectangular(self):
        with pytest.raises(InvalidArgumentError):
            SymmetricIndefiniteFactorization(sp.csr_matrix((2, 3)))

    @pytest.mark.unit
    def test_rhs_size_mismatch(self):
        factorization = SymmetricIndefiniteFactorization(sp.identity(3, format="csr"))
        with pytest.raises(InvalidArgumentError):
            factorization.solve(np.ones(4))


class TestPcg:
    """Tests for pcg and the Lanczos condition estimate."""

    @staticmethod
    def identity(r):
        return r.copy()

    @pytest.mark.unit
    def test_converges_on_spd(self, rng):
        g = rng.normal(size=(20, 20))
        a = g @ g.T + 20.0 * np.eye(20)
        b = rng.normal(size=20)
        x, report = pcg(lambda v: a @ v, self.identity, b, tol=1e-10, max_it=100)
        assert report.converged
        assert report.relative_residual <= 1e-10
        np.testing.assert_allclose(a @ x, b, atol=1e-8)
        assert len(report.residual_history) == report.iterations + 1

    @pytest.mark.unit
    def test_zero_rhs(self):
        x, report = pcg(self.identity, self.identity, np.zeros(5), tol=1e-8, max_it=10)
        assert report.iterations == 0
        assert report.converged
        np.testing.assert_array_equal(x, 0.0)

    @pytest.mark.unit
    def test_empty_rhs(self):
        x, report = pcg(self.identity, self.identity, np.zeros(0), tol=1e-8, max_it=10)
        assert x.shape == (0,)
        assert report.iterations == 0

    @pytest.mark.unit
    def test_exact_preconditioner_one_iteration(self):
        d = np.arange(1.0, 11.0)
        _, report = pcg(lambda v: d * v, lambda r: r / d, np.ones(10), tol=1e-12, max_it=50)
        assert report.iterations == 1

    @pytest.mark.unit
    def test_condition_estimate(self):
        """Full Lanczos on diag(1..10) recovers κ = 10."""
        d = np.arange(1.0, 11.0)
        _, report = pcg(lambda v: d * v, self.identity, np.ones(10), tol=1e-13, max_it=50)
        assert report.condition_estimate() == pytest.approx(10.0, rel=1e-6)

    @pytest.mark.unit
    def test_distinct_eigenvalues_bound_iterations(self):
        d = np.arange(1.0, 11.0)
        _, report = pcg(lambda v: d * v, self.identity, np.ones(10), tol=1e-8, max_it=50)
        assert report.converged
        assert report.iterations <= 10

    @pytest.mark.unit
    def test_condition_estimate_without_iterations(self):
        assert PcgReport(iterations=0, converged=True, relative_residual=0.0).condition_estimate() is None

    @pytest.mark.unit
    def test_condition_estimate_after_few_iterations(self):
        """A truncated run still yields finite Ritz bounds inside the spectrum."""
        d = np.arange(1.0, 101.0)
        _, report = pcg(lambda v: d * v, self.identity, np.ones(100), tol=1e-14, max_it=1)
        assert report.condition_estimate() == pytest.approx(1.0)
        _, report = pcg(lambda v: d * v, self.identity, np.ones(100), tol=1e-14, max_it=5)
        assert 1.0 < report.condition_estimate() <= 100.0

    @pytest.mark.unit
    def test_iteration_limit(self):
        d = np.arange(1.0, 101.0)
        _, report = pcg(lambda v: d * v, self.identity, np.ones(100), tol=1e-14, max_it=3)
        assert not report.converged
        assert report.iterations == 3

    @pytest.mark.unit
    def test_indefinite_operator_breaks_down(self):
        with pytest.raises(PcgBreakdownError) as exc_info:
            pcg(lambda v: -v, self.identity, np.ones(4), tol=1e-8, max_it=10)
        assert exc_info.value.iteration == 1

    @pytest.mark.unit
    def test_indefinite_preconditioner_breaks_down(self):
        with pytest.raises(PcgBreakdownError) as exc_info:
            pcg(self.identity, lambda r: -r, np.ones(4), tol=1e-8, max_it=10)
        assert exc_info.value.iteration == 0

    @pytest.mark.unit
    @pytest.mark.parametrize("tol, max_it", [(0.0, 10), (1e-8, -1)])
    def test_invalid_arguments(self, tol, max_it):
        with pytest.raises(InvalidArgumentError):
            pcg(self.identity, self.identity, np.ones(3), tol=tol, max_it=max_it)


class TestBordered:
    """Tests for bordered."""

    @pytest.mark.unit
    def test_border_scaled_to_matrix(self):
        matrix = sp.diags([1e6, 2e6]).tocsr()
        result = bordered(matrix, np.array([0.0, 3.0])).toarray()
        np.testing.assert_allclose(result[:2, 2], [0.0, 2e6])
        np.testing.assert_allclose(result[2, :2], [0.0, 2e6])
        assert result[2, 2] == 0.0

    @pytest.mark.unit
    def test_zero_border(self):
        with pytest.raises(InvalidArgumentError):
            bordered(sp.identity(2, format="csr"), np.zeros(2))


class TestMatrixMarket:
    """Tests for write_matrix_market."""

    @pytest.mark.unit
    def test_header_and_entries(self, tmp_path):
        matrix = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 3.0]]))
        path = tmp_path / "dump" / "k.mtx"
        write_matrix_market(path, matrix, comment="m=8 nd=2")
        text = path.read_text()
        assert text.startswith("%%MatrixMarket matrix coordinate real")
        assert "m=8 nd=2" in text
