"""
Sparse linear algebra used by the direct and FETI-DP solvers:
triplet assembly, symmetric indefinite factorization and PCG.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from config.settings import settings
from app.utils.errors import InvalidArgumentError, PcgBreakdownError, SingularMatrixError
from app.utils.logger import get_logger

logger = get_logger(__name__)

LinearOperator = Callable[[np.ndarray], np.ndarray]


def csr_from_triplets(
    n_rows: int,
    n_cols: int,
    rows: np.ndarray,
    cols: np.ndarray,
    values: np.ndarray,
    symmetric: bool = False,
) -> sp.csr_matrix:
    """
    Sum duplicate (row, col, value) triplets into a CSR matrix.

    With symmetric=True the result is checked to equal its transpose.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if not (rows.shape == cols.shape == values.shape):
        raise InvalidArgumentError("triplet arrays must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise InvalidArgumentError(f"triplet index out of range for a {n_rows}x{n_cols} matrix")
    matrix = sp.coo_matrix((values, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    if symmetric and not is_symmetric(matrix):
        raise InvalidArgumentError("triplets flagged symmetric do not form a symmetric matrix")
    return matrix


def csr_from_coo(matrix: sp.spmatrix) -> sp.csr_matrix:
    coo = matrix.tocoo()
    return csr_from_triplets(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)


def is_symmetric(matrix: sp.spmatrix, rtol: float = 1e-12) -> bool:
    if matrix.shape[0] != matrix.shape[1]:
        return False
    scale = abs(matrix).max() if matrix.nnz else 0.0
    if scale == 0.0:
        return True
    diff = matrix - matrix.T
    return (abs(diff).max() if diff.nnz else 0.0) <= rtol * scale


def bordered(matrix: sp.spmatrix, border: np.ndarray) -> sp.csr_matrix:
    """
    [[A, b], [bᵀ, 0]] with b rescaled to the magnitude of A.

    The scale of b only changes the discarded multiplier.
    """
    border = np.asarray(border, dtype=float)
    peak = float(np.abs(border).max()) if border.size else 0.0
    if peak == 0.0:
        raise InvalidArgumentError("border vector is zero")
    scale = float(abs(matrix).max()) if matrix.nnz else 1.0
    col = sp.csr_matrix((border * (scale / peak)).reshape(-1, 1))
    return sp.bmat([[matrix, col], [col.T, None]], format="csr")


def symmetric_equilibration(matrix: sp.spmatrix, sweeps: int = 8) -> np.ndarray:
    """
    Diagonal S with S A S close to unit row max-norm (Ruiz iteration).

    Empty rows keep a unit scale.
    """
    a = abs(sp.csr_matrix(matrix, dtype=float))
    scaling = np.ones(a.shape[0])
    for _ in range(sweeps):
        scaled = sp.diags(scaling) @ a @ sp.diags(scaling)
        row_max = scaled.max(axis=1).toarray().ravel()
        step = np.ones_like(row_max)
        nonzero = row_max > 0.0
        step[nonzero] = 1.0 / np.sqrt(row_max[nonzero])
        scaling *= step
        if np.all(np.abs(row_max[nonzero] - 1.0) < 1e-2):
            break
    return scaling


class SymmetricIndefiniteFactorization:
    """
    Sparse factorization of a symmetric, possibly indefinite matrix.

    The matrix is first equilibrated symmetrically, S A S with S diagonal,
    so that every row has unit max-norm; saddle-point blocks whose entries
    differ by many orders of magnitude then factor with stable pivots.
    SuperLU runs with a symmetric fill-reducing ordering and a relaxed
    diagonal pivot threshold, so for most saddle-point matrices the row and
    column permutations coincide and U = D Lᵀ. The inertia is then read from
    the signs of diag(U) (congruence keeps it); otherwise a dense LDLᵀ is
    used on small matrices.
    """

    def __init__(
        self,
        matrix: sp.spmatrix,
        label: str | None = None,
        zero_pivot_tolerance: float | None = None,
        dense_inertia_limit: int | None = None,
        equilibration_sweeps: int = 8,
    ):
        if matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError(f"factorization needs a square matrix, got {matrix.shape}")
        self.size = matrix.shape[0]
        self.label = label
        self.zero_pivot_tolerance = (
            settings.zero_pivot_tolerance if zero_pivot_tolerance is None else zero_pivot_tolerance
        )
        self.dense_inertia_limit = settings.dense_inertia_limit if dense_inertia_limit is None else dense_inertia_limit
        self._lu = None
        self.scaling = np.ones(self.size)
        if self.size == 0:
            self._matrix = sp.csc_matrix(matrix, dtype=float)
            return

        self.scaling = symmetric_equilibration(matrix, equilibration_sweeps)
        s = sp.diags(self.scaling)
        self._matrix = sp.csc_matrix(s @ sp.csc_matrix(matrix, dtype=float) @ s)

        try:
            self._lu = spla.splu(
                self._matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.1,
                options={"SymmetricMode": True},
            )
        except RuntimeError as e:
            raise SingularMatrixError(f"sparse LU failed: {e}", self.size, label=label) from e

        pivots = self._lu.U.diagonal()
        magnitude = np.abs(pivots)
        scale = max(float(magnitude.max()), float(abs(self._matrix).max()))
        worst = int(np.argmin(magnitude))
        if not np.all(np.isfinite(pivots)) or magnitude[worst] <= self.zero_pivot_tolerance * scale:
            raise SingularMatrixError("zero pivot", self.size, worst, float(pivots[worst]), label)
        logger.debug(
            f"Факторизация {label or 'матрицы'}: n={self.size}, nnz={self._matrix.nnz}, "
            f"nnz(L+U)={self._lu.L.nnz + self._lu.U.nnz}, "
            f"масштаб [{self.scaling.min():.2e}, {self.scaling.max():.2e}]"
        )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for a vector or for the columns of a dense (n, k) array."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.size:
            raise InvalidArgumentError(f"rhs has {rhs.shape[0]} rows, factorization has size {self.size}")
        if self.size == 0 or rhs.size == 0:
            return np.zeros_like(rhs)
        s = self.scaling if rhs.ndim == 1 else self.scaling[:, None]
        return s * self._lu.solve(np.ascontiguousarray(s * rhs))

    @property
    def inertia(self) -> tuple[int, int, int] | None:
        """(positive, negative, zero) eigenvalue counts, or None when unknown."""
        if self.size == 0:
            return (0, 0, 0)
        if np.array_equal(self._lu.perm_r, self._lu.perm_c):
            d = self._lu.U.diagonal()
            return int(np.sum(d > 0)), int(np.sum(d < 0)), int(np.sum(d == 0))
        if self.size <= self.dense_inertia_limit:
            _, d, _ = sla.ldl(self._matrix.toarray())
            eig = np.linalg.eigvalsh(d)
            tol = self.zero_pivot_tolerance * max(1.0, float(np.abs(eig).max()))
            return int(np.sum(eig > tol)), int(np.sum(eig < -tol)), int(np.sum(np.abs(eig) <= tol))
        return None


def factorize_symmetric_indefinite(matrix: sp.spmatrix, label: str | None = None) -> SymmetricIndefiniteFactorization:
    return SymmetricIndefiniteFactorization(matrix, label=label)


@dataclass
class PcgReport:
    iterations: int
    converged: bool
    relative_residual: float
    residual_history: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list, repr=False)
    betas: list[float] = field(default_factory=list, repr=False)

    def lanczos_tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the Lanczos matrix implied by the CG coefficients."""
        k = len(self.alphas)
        alphas = np.asarray(self.alphas)
        betas = np.asarray(self.betas[: max(k - 1, 0)])
        diag = 1.0 / alphas
        diag[1:] += betas / alphas[:-1]
        off = np.sqrt(betas) / alphas[:-1]
        return diag, off

    def condition_estimate(self) -> float | None:
        """Extreme Ritz value ratio of the preconditioned operator."""
        if not self.alphas:
            return None
        diag, off = self.lanczos_tridiagonal()
        if diag.size == 1:
            return 1.0
        ritz = sla.eigvalsh_tridiagonal(diag, off)
        if ritz[0] <= 0.0:
            return math.inf
        return float(ritz[-1] / ritz[0])


def pcg(
    apply_a: LinearOperator,
    apply_m: LinearOperator,
    b: np.ndarray,
    tol: float,
    max_it: int,
    record_lanczos: bool = True,
) -> tuple[np.ndarray, PcgReport]:
    """
    Preconditioned CG from a zero initial guess.

    Stops once ‖r_k‖ ≤ tol ‖b‖; the iteration count is the number of
    operator applications in the loop.
    """
    if tol <= 0.0:
        raise InvalidArgumentError(f"tolerance must be positive, got {tol}")
    if max_it < 0:
        raise InvalidArgumentError(f"iteration limit must be non-negative, got {max_it}")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if b.size == 0 or b_norm == 0.0:
        return x, PcgReport(iterations=0, converged=True, relative_residual=0.0)
    if not math.isfinite(b_norm):
        raise PcgBreakdownError("non-finite right-hand side", 0)

    report = PcgReport(iterations=0, converged=False, relative_residual=1.0, residual_history=[1.0])
    r = b.copy()
    z = apply_m(r)
    rz = float(r @ z)
    if not math.isfinite(rz) or rz <= 0.0:
        raise PcgBreakdownError(f"preconditioner is not positive (r·Mr={rz:.3e})", 0)
    p = z.copy()

    for k in range(1, max_it + 1):
        q = apply_a(p)
        curvature = float(p @ q)
        if not math.isfinite(curvature) or curvature <= 0.0:
            raise PcgBreakdownError(f"non-positive curvature p·Ap={curvature:.3e}", k)
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * q
        relative = float(np.linalg.norm(r)) / b_norm
        if not math.isfinite(relative):
            raise PcgBreakdownError("non-finite residual", k)
        report.iterations = k
        report.relative_residual = relative
        report.residual_history.append(relative)
        if record_lanczos:
            report.alphas.append(alpha)
        if relative <= tol:
            report.converged = True
            break

        z = apply_m(r)
        rz_next = float(r @ z)
        if not math.isfinite(rz_next) or rz_next <= 0.0:
            raise PcgBreakdownError(f"preconditioner is not positive (r·Mr={rz_next:.3e})", k)
        beta = rz_next / rz
        if record_lanczos:
            report.betas.append(beta)
        p = z + beta * p
        rz = rz_next

    if not report.converged:
        logger.warning(f"PCG остановлен после {report.iterations} итераций, относительная невязка {report.relative_residual:.3e}")
    return x, report


def write_matrix_market(path: str | Path, matrix: sp.spmatrix, comment: str = "") -> None:
    """Dump a sparse matrix in MatrixMarket coordinate format."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    mmwrite(str(path), sp.coo_matrix(matrix), comment=comment)
    logger.debug(f"Матрица {matrix.shape} записана в {path}")
