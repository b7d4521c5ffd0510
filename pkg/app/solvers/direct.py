"""
Monolithic sparse direct solve of one time step (reference oracle).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from app.fem.assembly import BlockSystem
from app.solvers.linalg import SymmetricIndefiniteFactorization, bordered
from app.utils.logger import get_logger

logger = get_logger(__name__)


def border_with_pressure_mean(system: BlockSystem) -> sp.csr_matrix:
    """Append the zero-mean pressure constraint as one extra row and column."""
    n = system.reduced_matrix.shape[0]
    n_p = len(system.pressure_weights)
    a = np.zeros(n)
    a[n - n_p :] = system.pressure_weights
    return bordered(system.reduced_matrix, a)


@dataclass
class DirectSolver:
    """Factor once, reuse across time steps; the matrix is time independent."""

    factorization: SymmetricIndefiniteFactorization
    bordered: bool

    @classmethod
    def build(cls, system: BlockSystem) -> "DirectSolver":
        matrix = border_with_pressure_mean(system) if system.pressure_kernel else system.reduced_matrix
        factorization = SymmetricIndefiniteFactorization(matrix, label="monolithic")
        return cls(factorization=factorization, bordered=system.pressure_kernel)

    def solve(self, system: BlockSystem) -> np.ndarray:
        rhs = system.reduced_rhs
        if self.bordered:
            rhs = np.append(rhs, 0.0)
        x_free = self.factorization.solve(rhs)[: len(system.free_dofs)]
        return system.fix_pressure_gauge(system.expand(x_free))


def solve_monolithic(system: BlockSystem) -> np.ndarray:
    """Full dof vector (Dirichlet values included) of one time step."""
    solver = DirectSolver.build(system)
    logger.debug(f"Прямое решение: n={len(system.free_dofs)}, окаймление={solver.bordered}")
    return solver.solve(system)
