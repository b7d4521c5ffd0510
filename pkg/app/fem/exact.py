"""
Manufactured solution of the poroelastic test problem on the unit square.

    u = -1/(4π(λ+2μ)) [cos 2πx sin 2πy, sin 2πx cos 2πy] sin 2πt
    z = -2πκ          [cos 2πx sin 2πy, sin 2πx cos 2πy] sin 2πt
    p = sin 2πx sin 2πy sin 2πt

With α = 1 and c₀ = 0 the momentum and Darcy equations hold with zero body
forces and the mass balance ∇·(u_t + z) = g₁ defines the source.
"""

from dataclasses import dataclass

import numpy as np

from app.models.schemas import ModelParams

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ManufacturedSolution:
    params: ModelParams

    @property
    def displacement_amplitude(self) -> float:
        return -1.0 / (2.0 * TWO_PI * (self.params.lam + 2.0 * self.params.mu))

    @property
    def flux_amplitude(self) -> float:
        return -TWO_PI * self.params.permeability

    @staticmethod
    def _shape(x, y) -> np.ndarray:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.stack(
            [np.cos(TWO_PI * x) * np.sin(TWO_PI * y), np.sin(TWO_PI * x) * np.cos(TWO_PI * y)],
            axis=-1,
        )

    def displacement(self, x, y, t: float) -> np.ndarray:
        return self.displacement_amplitude * np.sin(TWO_PI * t) * self._shape(x, y)

    def flux(self, x, y, t: float) -> np.ndarray:
        return self.flux_amplitude * np.sin(TWO_PI * t) * self._shape(x, y)

    def pressure(self, x, y, t: float) -> np.ndarray:
        return np.sin(TWO_PI * np.asarray(x)) * np.sin(TWO_PI * np.asarray(y)) * np.sin(TWO_PI * t)

    def source(self, x, y, t: float) -> np.ndarray:
        """g₁ = ∂t ∇·u + ∇·z."""
        lam, mu, kappa = self.params.lam, self.params.mu, self.params.permeability
        amplitude = TWO_PI * np.cos(TWO_PI * t) / (lam + 2.0 * mu) + 2.0 * TWO_PI**2 * kappa * np.sin(TWO_PI * t)
        return amplitude * np.sin(TWO_PI * np.asarray(x)) * np.sin(TWO_PI * np.asarray(y))

    def normal_flux(self, x, y, t: float, normal: np.ndarray) -> np.ndarray:
        """g₂ = z·n."""
        return self.flux(x, y, t) @ np.asarray(normal, dtype=float)


def exact_solution_eval(x: float, y: float, t: float, params: ModelParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Closed-form (u, z, p) at one point."""
    solution = ManufacturedSolution(params)
    return solution.displacement(x, y, t), solution.flux(x, y, t), float(solution.pressure(x, y, t))


def manufactured_source_g1(x: float, y: float, t: float, params: ModelParams) -> float:
    return float(ManufacturedSolution(params).source(x, y, t))
