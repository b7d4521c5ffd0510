"""
FETI-DP reduction of the twofold saddle-point system.

Per subdomain the free local dofs are ordered [interior U | pressures |
primal | dual]. Pressures are split as p = p_I + p₀·1 with p_I of zero
area-weighted mean: p_I stays with the interior unknowns (the local blocks
are bordered with the area vector) while p₀ joins the primal displacements
and fluxes in the global coarse space.

Notation used below, per subdomain:
    r  = (U_I, p_I)         eliminated locally
    Δ  = dual U dofs        torn, glued by Lagrange multipliers
    c  = (U_Π, p₀)          assembled coarse unknowns
    B  = r ∪ Δ

With edge-average constraints the subdomain matrices and the right-hand
side are expressed in the basis of DofMap.basis_change, where each edge
mean is a primal unknown; recovered solutions are mapped back.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import numpy as np
import scipy.sparse as sp

from app.fem.assembly import BlockSystem
from app.fem.dofmap import DofMap, SubdomainDofs
from app.fem.mesh import SubdomainPartition
from app.models.schemas import PreconditionerKind
from app.solvers.linalg import PcgReport, SymmetricIndefiniteFactorization, bordered, csr_from_triplets, pcg
from app.utils.errors import ConsistencyError, InvalidArgumentError
from app.utils.logger import get_logger
from config.settings import settings

logger = get_logger(__name__)

R = TypeVar("R")


def _to_edge_basis(basis: sp.csr_matrix, sub: SubdomainDofs, matrix: sp.csr_matrix) -> sp.csr_matrix:
    """Tᵢᵀ Kᵢ Tᵢ; edge groups never straddle a subdomain boundary."""
    local = sub.local_dofs
    t = basis[local][:, local]
    k = (t.T @ matrix @ t).tocsr()
    return ((k + k.T) * 0.5).tocsr()


def _append_zero_rows(rhs: np.ndarray, count: int = 1) -> np.ndarray:
    if rhs.ndim == 1:
        return np.concatenate([rhs, np.zeros(count)])
    return np.vstack([rhs, np.zeros((count, rhs.shape[1]))])


@dataclass(eq=False)
class LocalProblem:
    """Blocks and factorizations of one subdomain."""

    index: int
    n_interior: int
    n_pressure: int
    n_primal: int
    n_dual: int
    # local coarse column -> global coarse index
    coarse_index: np.ndarray
    areas: np.ndarray
    K_rr: sp.csr_matrix
    K_rD: sp.csr_matrix
    K_DD: sp.csr_matrix
    K_rc: np.ndarray
    K_Dc: np.ndarray
    K_cc: np.ndarray
    rr: SymmetricIndefiniteFactorization
    bb: SymmetricIndefiniteFactorization
    # K_BB⁻¹ K_Bc and K_rr⁻¹ K_rc, dense
    X: np.ndarray
    Y: np.ndarray
    a_only: SymmetricIndefiniteFactorization | None = field(default=None, repr=False)

    @property
    def n_r(self) -> int:
        return self.n_interior + self.n_pressure

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_index)

    @property
    def border(self) -> np.ndarray:
        b = np.zeros(self.n_r)
        b[self.n_interior :] = self.areas / self.areas.max()
        return b

    def solve_rr(self, rhs: np.ndarray) -> np.ndarray:
        """Interior solve with Δ and c frozen at zero, p_I of zero mean."""
        return self.rr.solve(_append_zero_rows(rhs))[: self.n_r]

    def solve_bb(self, rhs: np.ndarray) -> np.ndarray:
        """Solve on r ∪ Δ with c frozen at zero."""
        return self.bb.solve(_append_zero_rows(rhs))[: self.n_r + self.n_dual]

    @property
    def coarse_block(self) -> np.ndarray:
        """K_cc - K_cB K_BB⁻¹ K_Bc."""
        K_Bc = np.vstack([self.K_rc, self.K_Dc])
        return self.K_cc - K_Bc.T @ self.X

    @property
    def coarse_block_r(self) -> np.ndarray:
        """K_cc - K_cr K_rr⁻¹ K_rc (Δ frozen at zero)."""
        return self.K_cc - self.K_rc.T @ self.Y


def _build_local(sub, matrix: sp.csr_matrix, coarse_index: np.ndarray, with_a_only: bool) -> LocalProblem:
    nI, nP, nPi, nD = sub.n_interior, sub.n_pressure, sub.n_primal, sub.n_dual
    n_r = nI + nP
    r = np.arange(n_r)
    pi = np.arange(n_r, n_r + nPi)
    dl = np.arange(n_r + nPi, n_r + nPi + nD)

    # coarse basis: unit columns at Π plus the subdomain constant pressure
    phi = np.zeros((matrix.shape[0], nPi + 1))
    phi[pi, np.arange(nPi)] = 1.0
    phi[nI:n_r, nPi] = 1.0
    K_phi = np.asarray(matrix @ phi)

    K_rr = matrix[r][:, r].tocsr()
    K_rD = matrix[r][:, dl].tocsr()
    K_DD = matrix[dl][:, dl].tocsr()
    K_rc = K_phi[r]
    K_Dc = K_phi[dl]
    K_cc = phi.T @ K_phi

    label = f"subdomain {sub.index}"
    border_r = np.zeros(n_r)
    border_r[nI:] = sub.areas / sub.areas.max()
    rr = SymmetricIndefiniteFactorization(bordered(K_rr, border_r), label=f"{label} interior block")
    bb_idx = np.concatenate([r, dl])
    border_b = np.concatenate([border_r, np.zeros(nD)])
    bb = SymmetricIndefiniteFactorization(
        bordered(matrix[bb_idx][:, bb_idx], border_b), label=f"{label} torn block"
    )
    a_only = None
    if with_a_only and nI:
        a_only = SymmetricIndefiniteFactorization(matrix[:nI, :nI], label=f"{label} A_II")

    local = LocalProblem(
        index=sub.index,
        n_interior=nI,
        n_pressure=nP,
        n_primal=nPi,
        n_dual=nD,
        coarse_index=coarse_index,
        areas=sub.areas,
        K_rr=K_rr,
        K_rD=K_rD,
        K_DD=K_DD,
        K_rc=K_rc,
        K_Dc=K_Dc,
        K_cc=K_cc,
        rr=rr,
        bb=bb,
        X=np.zeros((0, 0)),
        Y=np.zeros((0, 0)),
        a_only=a_only,
    )
    local.X = local.solve_bb(np.vstack([K_rc, K_Dc]))
    local.Y = local.solve_rr(K_rc)
    logger.debug(f"Подобласть {sub.index}: n_I={nI}, n_p={nP}, n_Π={nPi}, n_Δ={nD}")
    return local


@dataclass(eq=False)
class JumpOperator:
    """
    Signed incidence B_Δ from the torn dual space to the multipliers.

    One row per shared dual dof: +1 on the copy of the lower-index subdomain
    and -1 on the other one.
    """

    matrix: sp.csr_matrix
    multiplicity: np.ndarray
    offsets: np.ndarray

    @property
    def n_multipliers(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_torn(self) -> int:
        return self.matrix.shape[1]

    @property
    def scaled(self) -> sp.csr_matrix:
        """B_Δ,D = D B_Δ with D = diag(1/N_x)."""
        if self.n_multipliers == 0:
            return self.matrix.copy()
        return (sp.diags(1.0 / self.multiplicity) @ self.matrix).tocsr()

    def apply(self, torn: np.ndarray) -> np.ndarray:
        return self.matrix @ torn

    def apply_transpose(self, lam: np.ndarray) -> np.ndarray:
        return self.matrix.T @ lam

    def split(self, torn: np.ndarray) -> list[np.ndarray]:
        return [torn[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:], strict=True)]


def build_jump_operator(dofmap: DofMap) -> JumpOperator:
    sizes = [sub.n_dual for sub in dofmap.subdomains]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    rows, cols, vals = [], [], []
    for sub, offset in zip(dofmap.subdomains, offsets[:-1], strict=True):
        k = np.searchsorted(dofmap.dual_dofs, sub.dual)
        rows.append(k)
        cols.append(offset + np.arange(sub.n_dual))
        vals.append(np.where(dofmap.dual_pairs[k, 0] == sub.index, 1.0, -1.0))
    n_dual = len(dofmap.dual_dofs)
    matrix = csr_from_triplets(
        n_dual,
        int(offsets[-1]),
        np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
        np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
        np.concatenate(vals) if vals else np.zeros(0),
    )
    multiplicity = dofmap.multiplicity[dofmap.dual_dofs].astype(float)
    return JumpOperator(matrix=matrix, multiplicity=multiplicity, offsets=offsets)


@dataclass(eq=False)
class TornRhs:
    """Right-hand side split over subdomains plus the assembled coarse part."""

    f_r: list[np.ndarray]
    f_D: list[np.ndarray]
    g_c: np.ndarray


class FetidpOperator:
    """
    Precomputed subdomain factorizations, coarse problem and jump operators.

    The operator only depends on the matrix, so one instance serves every
    time step of a run.
    """

    def __init__(
        self,
        locals_: list[LocalProblem],
        jump: JumpOperator,
        dofmap: DofMap,
        coarse: SymmetricIndefiniteFactorization,
        coarse_r: SymmetricIndefiniteFactorization,
        n_coarse: int,
        augmented: bool,
        executor: ThreadPoolExecutor | None,
        factorization_seconds: float,
        basis: sp.csr_matrix | None = None,
    ):
        self.locals = locals_
        self.jump = jump
        self.dofmap = dofmap
        self.coarse = coarse
        self.coarse_r = coarse_r
        self.n_coarse = n_coarse
        self.augmented = augmented
        self.factorization_seconds = factorization_seconds
        self._executor = executor
        self._free_pos = np.full(dofmap.n_dofs, -1, dtype=np.int64)
        self._free_pos[dofmap.free_dofs] = np.arange(len(dofmap.free_dofs))
        # x_free = T x̂_free; None keeps the nodal basis
        self._basis_free = None if basis is None else basis[dofmap.free_dofs][:, dofmap.free_dofs].tocsr()

    # ----------------------------------------------------------- plumbing

    @property
    def n_subdomains(self) -> int:
        return len(self.locals)

    @property
    def n_multipliers(self) -> int:
        return self.jump.n_multipliers

    @property
    def n_primal(self) -> int:
        return len(self.dofmap.primal_dofs)

    def _map(self, fn: Callable[..., R], *items: Iterable) -> list[R]:
        if self._executor is None:
            return list(map(fn, *items))
        return list(self._executor.map(fn, *items))

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "FetidpOperator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _gather_coarse(self, parts: list[np.ndarray]) -> np.ndarray:
        # fixed subdomain order keeps the reduction deterministic
        total = np.zeros(self.n_coarse)
        for local, part in zip(self.locals, parts, strict=True):
            np.add.at(total, local.coarse_index, part)
        return total

    def _solve_coarse(self, factorization: SymmetricIndefiniteFactorization, rhs: np.ndarray) -> np.ndarray:
        if self.augmented:
            return factorization.solve(np.append(rhs, 0.0))[: self.n_coarse]
        return factorization.solve(rhs)

    def _check_torn(self, torn: np.ndarray) -> None:
        if torn.shape != (self.jump.n_torn,):
            raise InvalidArgumentError(f"expected a torn dual vector of size {self.jump.n_torn}, got {torn.shape}")

    def _check_multipliers(self, lam: np.ndarray) -> None:
        if lam.shape != (self.n_multipliers,):
            raise InvalidArgumentError(f"expected {self.n_multipliers} multipliers, got {lam.shape}")

    # ------------------------------------------------------ right-hand side

    def split_rhs(self, f_free: np.ndarray) -> TornRhs:
        """Tear a reduced right-hand side: dual values are shared by multiplicity."""
        if f_free.shape != (len(self.dofmap.free_dofs),):
            raise InvalidArgumentError("right-hand side does not match the free dofs")
        if self._basis_free is not None:
            f_free = self._basis_free.T @ f_free
        pos = self._free_pos
        f_r, f_D = [], []
        p0 = np.zeros(self.n_subdomains)
        for i, sub in enumerate(self.dofmap.subdomains):
            f_p = f_free[pos[sub.pressure]]
            f_r.append(np.concatenate([f_free[pos[sub.interior]], f_p]))
            f_D.append(f_free[pos[sub.dual]] / self.dofmap.multiplicity[sub.dual])
            p0[i] = f_p.sum()
        g_c = np.concatenate([f_free[pos[self.dofmap.primal_dofs]], p0])
        return TornRhs(f_r=f_r, f_D=f_D, g_c=g_c)

    def _zero_rhs(self) -> TornRhs:
        return TornRhs(
            f_r=[np.zeros(local.n_r) for local in self.locals],
            f_D=[np.zeros(local.n_dual) for local in self.locals],
            g_c=np.zeros(self.n_coarse),
        )

    # ---------------------------------------------------- torn elimination

    def solve_torn(self, rhs: TornRhs) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """
        Solve the partially assembled system K̃ x = f.

        Returns the r parts, the Δ parts and the coarse vector.
        """
        v = self._map(lambda local, a, b: local.solve_bb(np.concatenate([a, b])), self.locals, rhs.f_r, rhs.f_D)
        parts = [np.vstack([local.K_rc, local.K_Dc]).T @ vi for local, vi in zip(self.locals, v, strict=True)]
        c = self._solve_coarse(self.coarse, rhs.g_c - self._gather_coarse(parts))
        w = [vi - local.X @ c[local.coarse_index] for local, vi in zip(self.locals, v, strict=True)]
        return [wi[: local.n_r] for local, wi in zip(self.locals, w, strict=True)], [
            wi[local.n_r :] for local, wi in zip(self.locals, w, strict=True)
        ], c

    def _eliminate(
        self, u_dual: list[np.ndarray], rhs: TornRhs
    ) -> tuple[list[np.ndarray], np.ndarray, list[np.ndarray]]:
        """
        Eliminate r and c with the dual values prescribed.

        Returns (r parts, coarse vector, Δ rows of K̃ x).
        """
        z = self._map(
            lambda local, f, u: local.solve_rr(f - local.K_rD @ u), self.locals, rhs.f_r, u_dual
        )
        parts = [
            local.K_Dc.T @ u + local.K_rc.T @ zi for local, u, zi in zip(self.locals, u_dual, z, strict=True)
        ]
        c = self._solve_coarse(self.coarse_r, rhs.g_c - self._gather_coarse(parts))
        r_parts, residual = [], []
        for local, u, zi in zip(self.locals, u_dual, z, strict=True):
            cl = c[local.coarse_index]
            ri = zi - local.Y @ cl
            r_parts.append(ri)
            residual.append(local.K_DD @ u + local.K_rD.T @ ri + local.K_Dc @ cl)
        return r_parts, c, residual

    # ------------------------------------------------------------ operators

    def apply_schur(self, u_dual: np.ndarray) -> np.ndarray:
        """S̃ U_Δ on the torn dual space."""
        u_dual = np.asarray(u_dual, dtype=float)
        self._check_torn(u_dual)
        _, _, residual = self._eliminate(self.jump.split(u_dual), self._zero_rhs())
        return np.concatenate(residual) if residual else np.zeros(0)

    def apply_inverse_schur(self, g_dual: np.ndarray) -> np.ndarray:
        """S̃⁻¹ g through the torn solve with zero interior and coarse loads."""
        g_dual = np.asarray(g_dual, dtype=float)
        self._check_torn(g_dual)
        rhs = self._zero_rhs()
        rhs.f_D = self.jump.split(g_dual)
        _, w_D, _ = self.solve_torn(rhs)
        return np.concatenate(w_D) if w_D else np.zeros(0)

    def apply_F(self, lam: np.ndarray) -> np.ndarray:
        """F λ = B_Δ S̃⁻¹ B_Δᵀ λ."""
        lam = np.asarray(lam, dtype=float)
        self._check_multipliers(lam)
        return self.jump.apply(self.apply_inverse_schur(self.jump.apply_transpose(lam)))

    def reduced_dual_rhs(self, rhs: TornRhs) -> np.ndarray:
        """f_Δ* = f_Δ minus the Δ rows of the r/c elimination with U_Δ = 0."""
        zeros = [np.zeros(local.n_dual) for local in self.locals]
        _, _, residual = self._eliminate(zeros, rhs)
        parts = [f - res for f, res in zip(rhs.f_D, residual, strict=True)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def harmonic_extension(
        self, i: int, trace: np.ndarray, kind: PreconditionerKind = PreconditionerKind.DIRICHLET
    ) -> np.ndarray:
        """
        Interior values of subdomain i for a prescribed dual trace, primal
        values held at zero. The saddle variant returns (U_I, p_I), the
        A-only variant returns U_I.
        """
        local = self.locals[i]
        trace = np.asarray(trace, dtype=float)
        if trace.shape != (local.n_dual,):
            raise InvalidArgumentError(f"subdomain {i} has {local.n_dual} dual dofs, got {trace.shape}")
        if kind == PreconditionerKind.DIRICHLET_A_ONLY:
            if local.n_interior == 0:
                return np.zeros(0)
            return -self._a_only(local).solve(local.K_rD[: local.n_interior] @ trace)
        return -local.solve_rr(local.K_rD @ trace)

    def _a_only(self, local: LocalProblem) -> SymmetricIndefiniteFactorization:
        if local.a_only is None:
            local.a_only = SymmetricIndefiniteFactorization(
                local.K_rr[: local.n_interior, : local.n_interior], label=f"subdomain {local.index} A_II"
            )
        return local.a_only

    def _local_dirichlet(self, local: LocalProblem, w: np.ndarray, kind: PreconditionerKind) -> np.ndarray:
        if local.n_dual == 0:
            return np.zeros(0)
        if kind == PreconditionerKind.DIRICHLET_A_ONLY:
            result = local.K_DD @ w
            if local.n_interior:
                K_ID = local.K_rD[: local.n_interior]
                result -= K_ID.T @ self._a_only(local).solve(K_ID @ w)
            return result
        return local.K_DD @ w - local.K_rD.T @ local.solve_rr(local.K_rD @ w)

    def apply_dirichlet_preconditioner(
        self, residual: np.ndarray, kind: PreconditionerKind = PreconditionerKind.DIRICHLET
    ) -> np.ndarray:
        """M⁻¹ r = B_Δ,D H_Δ B_Δ,Dᵀ r with H_Δ the local harmonic-extension Schur complements."""
        residual = np.asarray(residual, dtype=float)
        self._check_multipliers(residual)
        scaled = self.jump.scaled
        w = self.jump.split(scaled.T @ residual)
        h = self._map(lambda local, wi: self._local_dirichlet(local, wi, kind), self.locals, w)
        return scaled @ (np.concatenate(h) if h else np.zeros(0))

    def preconditioner(self, kind: PreconditionerKind) -> Callable[[np.ndarray], np.ndarray]:
        if kind == PreconditionerKind.NONE:
            return lambda r: r.copy()
        return lambda r: self.apply_dirichlet_preconditioner(r, kind)

    # ----------------------------------------------------------- solution

    def solve_interface(
        self,
        f_dual_star: np.ndarray,
        precond: PreconditionerKind = PreconditionerKind.DIRICHLET,
        tol: float | None = None,
        max_it: int | None = None,
    ) -> tuple[np.ndarray, PcgReport]:
        """PCG on B_Δ S̃⁻¹ B_Δᵀ λ = B_Δ S̃⁻¹ f_Δ*."""
        tol = settings.pcg_tolerance if tol is None else tol
        max_it = settings.pcg_max_iterations if max_it is None else max_it
        d = self.jump.apply(self.apply_inverse_schur(f_dual_star))
        lam, report = pcg(self.apply_F, self.preconditioner(precond), d, tol, max_it)
        logger.debug(
            f"PCG на интерфейсе ({precond.value}): {report.iterations} итераций, "
            f"история невязок {[f'{r:.2e}' for r in report.residual_history]}"
        )
        return lam, report

    def recover_solution(self, lam: np.ndarray, rhs: TornRhs, f_dual_star: np.ndarray | None = None) -> np.ndarray:
        """
        Back-substitute U_Δ, (U_Π, p₀) and the interiors; returns the free-dof vector.

        Raises:
            ConsistencyError: if the two copies of a dual dof disagree
        """
        lam = np.asarray(lam, dtype=float)
        self._check_multipliers(lam)
        if f_dual_star is None:
            f_dual_star = self.reduced_dual_rhs(rhs)
        u_dual = self.apply_inverse_schur(f_dual_star - self.jump.apply_transpose(lam))

        jump = float(np.linalg.norm(self.jump.apply(u_dual)))
        reference = float(np.linalg.norm(u_dual))
        if reference > 0.0 and jump > settings.consistency_tolerance * reference:
            raise ConsistencyError("dual copies disagree after recovery", jump, reference)

        u_parts = self.jump.split(u_dual)
        r_parts, c, _ = self._eliminate(u_parts, rhs)

        pos = self._free_pos
        x = np.zeros(len(self.dofmap.free_dofs))
        x[pos[self.dofmap.primal_dofs]] = c[: self.n_primal]
        for i, (sub, local) in enumerate(zip(self.dofmap.subdomains, self.locals, strict=True)):
            r = r_parts[i]
            x[pos[sub.interior]] = r[: local.n_interior]
            x[pos[sub.pressure]] = r[local.n_interior :] + c[self.n_primal + i]
            x[pos[sub.dual]] += u_parts[i] / self.dofmap.multiplicity[sub.dual]
        return x if self._basis_free is None else self._basis_free @ x

    def solve(
        self,
        system: BlockSystem,
        precond: PreconditionerKind = PreconditionerKind.DIRICHLET,
        tol: float | None = None,
        max_it: int | None = None,
    ) -> tuple[np.ndarray, PcgReport]:
        """One time step: full dof vector (essential values included) and the PCG report."""
        rhs = self.split_rhs(system.reduced_rhs)
        f_dual_star = self.reduced_dual_rhs(rhs)
        lam, report = self.solve_interface(f_dual_star, precond, tol, max_it)
        x_free = self.recover_solution(lam, rhs, f_dual_star)
        return system.fix_pressure_gauge(system.expand(x_free)), report

    # --------------------------------------------------------------- debug

    def partially_assembled_matrix(self) -> tuple[np.ndarray, int]:
        """
        Dense K̃ over [r_1..r_N | borders | c | area row | Δ_1..Δ_N].

        Only meant for small cases; the trailing block of the returned size
        is the torn dual space.
        """
        n_r = [local.n_r for local in self.locals]
        r_off = np.concatenate([[0], np.cumsum(n_r)]).astype(int)
        n_b = self.n_subdomains
        c0 = r_off[-1] + n_b
        a_row = c0 + self.n_coarse
        d0 = a_row + (1 if self.augmented else 0)
        n = d0 + self.jump.n_torn
        k = np.zeros((n, n))
        for i, local in enumerate(self.locals):
            r = slice(r_off[i], r_off[i + 1])
            d = slice(d0 + self.jump.offsets[i], d0 + self.jump.offsets[i + 1])
            cidx = c0 + local.coarse_index
            k[r, r] = local.K_rr.toarray()
            k[r, d] = local.K_rD.toarray()
            k[d, r] = local.K_rD.T.toarray()
            k[d, d] = local.K_DD.toarray()
            k[r, cidx] = local.K_rc
            k[cidx, r] = local.K_rc.T
            k[d, cidx] = local.K_Dc
            k[cidx, d] = local.K_Dc.T
            k[np.ix_(cidx, cidx)] += local.K_cc
            k[r_off[-1] + i, r] = local.border
            k[r, r_off[-1] + i] = local.border
            if self.augmented:
                k[a_row, cidx[-1]] = local.areas.sum()
                k[cidx[-1], a_row] = local.areas.sum()
        return k, self.jump.n_torn


def build_fetidp(
    block_system: BlockSystem,
    dofmap: DofMap,
    partition: SubdomainPartition,
    precond: PreconditionerKind = PreconditionerKind.DIRICHLET,
    threads: int | None = None,
) -> FetidpOperator:
    """
    Factorize every subdomain block and the coarse problem.

    Raises:
        SingularMatrixError: a local block is singular (labelled with the subdomain)
    """
    if len(block_system.subdomain_matrices) != partition.n_subdomains or len(dofmap.subdomains) != partition.n_subdomains:
        raise InvalidArgumentError("block system, dof map and partition disagree on the subdomain count")
    started = time.perf_counter()
    threads = settings.threads if threads is None else threads
    executor = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="fetidp") if threads > 1 else None

    n_primal = len(dofmap.primal_dofs)
    coarse_indices = [
        np.append(np.searchsorted(dofmap.primal_dofs, sub.primal), n_primal + sub.index) for sub in dofmap.subdomains
    ]
    matrices = block_system.subdomain_matrices
    basis = None
    if dofmap.edge_groups:
        basis = dofmap.basis_change()
        matrices = tuple(
            _to_edge_basis(basis, sub, k) for sub, k in zip(dofmap.subdomains, matrices, strict=True)
        )
    with_a_only = precond == PreconditionerKind.DIRICHLET_A_ONLY
    tasks = (dofmap.subdomains, matrices, coarse_indices, [with_a_only] * len(coarse_indices))
    try:
        if executor is None:
            locals_ = list(map(_build_local, *tasks))
        else:
            locals_ = list(executor.map(_build_local, *tasks))
    except Exception:
        if executor is not None:
            executor.shutdown(wait=False)
        raise

    n_coarse = n_primal + partition.n_subdomains
    augmented = block_system.pressure_kernel
    areas = np.zeros(n_coarse)
    for local in locals_:
        areas[n_primal + local.index] = local.areas.sum()

    def coarse_matrix(block: Callable[[LocalProblem], np.ndarray]) -> sp.csr_matrix:
        s = np.zeros((n_coarse, n_coarse))
        for local in locals_:
            s[np.ix_(local.coarse_index, local.coarse_index)] += block(local)
        s = 0.5 * (s + s.T)
        if augmented:
            return bordered(sp.csr_matrix(s), areas)
        return sp.csr_matrix(s)

    coarse = SymmetricIndefiniteFactorization(coarse_matrix(lambda lp: lp.coarse_block), label="coarse")
    coarse_r = SymmetricIndefiniteFactorization(coarse_matrix(lambda lp: lp.coarse_block_r), label="coarse (Δ fixed)")
    jump = build_jump_operator(dofmap)
    elapsed = time.perf_counter() - started

    logger.info(
        f"Оператор FETI-DP: {partition.n_subdomains} подобластей, {n_coarse} грубых неизвестных "
        f"({n_primal} первичных + {partition.n_subdomains} постоянных давлений), "
        f"{jump.n_multipliers} множителей, построен за {elapsed:.2f}s"
    )
    return FetidpOperator(
        locals_=locals_,
        jump=jump,
        dofmap=dofmap,
        coarse=coarse,
        coarse_r=coarse_r,
        n_coarse=n_coarse,
        augmented=augmented,
        executor=executor,
        factorization_seconds=elapsed,
        basis=basis,
    )


def fetidp_solve(
    system: BlockSystem,
    dofmap: DofMap,
    partition: SubdomainPartition,
    precond: PreconditionerKind = PreconditionerKind.DIRICHLET,
    tol: float | None = None,
    max_it: int | None = None,
    threads: int | None = None,
) -> tuple[np.ndarray, PcgReport]:
    """Build, solve one step, release the worker pool."""
    with build_fetidp(system, dofmap, partition, precond, threads) as operator:
        return operator.solve(system, precond, tol, max_it)
