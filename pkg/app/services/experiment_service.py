"""
Сервис экспериментов: цикл по времени и четыре режима запуска.

Режимы:
- solve: одна или несколько ячеек, полный цикл по времени через FETI-DP
- oracle-check: один шаг FETI-DP против прямого решения
- converge: сходимость на последовательности сеток
- scalability: таблица числа итераций по числу подобластей
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from app.fem.assembly import BiotAssembler, FieldState, error_norms
from app.fem.dofmap import BoundarySpec, DofMap, build_dofmap
from app.fem.mesh import Mesh, SubdomainPartition, build_partition, build_structured_mesh
from app.models.schemas import (
    DEFAULT_REGIMES,
    ModelParams,
    PhaseTimings,
    PreconditionerKind,
    PrimalSpace,
    ResultRecord,
    RunConfig,
    RunMode,
)
from app.solvers.direct import DirectSolver
from app.solvers.fetidp import FetidpOperator, build_fetidp
from app.utils.errors import BiotFetidpError, ConvergenceError, InvalidArgumentError
from app.utils.logger import get_logger
from config.settings import settings

logger = get_logger(__name__)

# Published Dirichlet-preconditioned iteration counts: regime -> H/h -> nd -> iterations
REFERENCE_ITERATIONS: dict[tuple[float, float], dict[int, dict[int, int]]] = {
    DEFAULT_REGIMES[0]: {
        8: {2: 4, 3: 5, 4: 5, 5: 5, 6: 5, 7: 5, 8: 5},
        12: {2: 4, 3: 5, 4: 5, 5: 5, 6: 5, 7: 5, 8: 5},
        16: {2: 4, 3: 5, 4: 5, 5: 5, 6: 5, 7: 5, 8: 5},
    },
    DEFAULT_REGIMES[1]: {
        8: {2: 9, 3: 9, 4: 9, 5: 10, 6: 11, 7: 12, 8: 12},
        12: {2: 10, 3: 12, 4: 12, 5: 13, 6: 13, 7: 15, 8: 13},
        16: {2: 11, 3: 14, 4: 17, 5: 15, 6: 16, 7: 16, 8: 17},
    },
}

REFERENCE_FACTOR = 2.0
COMPRESSIBLE_SPREAD = 3
INCOMPRESSIBLE_GROWTH = 10
RATE_THRESHOLDS = {"e_u": 1.6, "e_z": 1.6, "e_p": 0.8}


def reference_iterations(nu: float, kappa: float, ratio: int, nd: int) -> int | None:
    for (ref_nu, ref_kappa), table in REFERENCE_ITERATIONS.items():
        if math.isclose(nu, ref_nu) and math.isclose(kappa, ref_kappa):
            return table.get(ratio, {}).get(nd)
    return None


# ==================== Problem setup ====================


@dataclass(eq=False)
class Problem:
    """Mesh, partition, dof map and cached assembler of one experiment cell."""

    mesh: Mesh
    partition: SubdomainPartition
    dofmap: DofMap
    params: ModelParams
    assembler: BiotAssembler

    @property
    def m(self) -> int:
        return self.mesh.m


def build_problem(
    m: int,
    nd: int,
    params: ModelParams,
    boundary: BoundarySpec | None = None,
    primal: PrimalSpace = PrimalSpace.EDGE_AVERAGES,
) -> Problem:
    mesh = build_structured_mesh(m)
    partition = build_partition(mesh, nd)
    dofmap = build_dofmap(mesh, partition, boundary, primal)
    return Problem(mesh, partition, dofmap, params, BiotAssembler(mesh, partition, dofmap, params))


@dataclass
class TimeLoopResult:
    state: FieldState
    t_final: float
    iterations: list[int] = field(default_factory=list)
    condition_estimates: list[float] = field(default_factory=list)
    first_step_unpreconditioned: int | None = None
    first_step_unpreconditioned_converged: bool | None = None
    timings: PhaseTimings = field(default_factory=PhaseTimings)


def run_time_loop(
    problem: Problem,
    precond: PreconditionerKind,
    tol: float,
    max_it: int,
    threads: int,
    compare_unpreconditioned: bool = False,
) -> TimeLoopResult:
    """
    Backward Euler from the zero initial state to t_end.

    The FETI-DP operator is built on the first step and reused afterwards.

    Raises:
        ConvergenceError: if an interface solve does not reach tol
    """
    params = problem.params
    state = FieldState.zeros(problem.mesh)
    result = TimeLoopResult(state=state, t_final=0.0)
    operator: FetidpOperator | None = None
    try:
        for step in range(1, params.n_steps + 1):
            t_n = step * params.dt
            system = problem.assembler.assemble(t_n, state)

            if operator is None:
                operator = build_fetidp(system, problem.dofmap, problem.partition, precond, threads)
                result.timings.factorization += operator.factorization_seconds
                if compare_unpreconditioned:
                    # interface iterations only; the multipliers are discarded
                    f_star = operator.reduced_dual_rhs(operator.split_rhs(system.reduced_rhs))
                    _, plain = operator.solve_interface(f_star, PreconditionerKind.NONE, tol, max_it)
                    result.first_step_unpreconditioned = plain.iterations
                    result.first_step_unpreconditioned_converged = plain.converged
                    if not plain.converged:
                        logger.warning(
                            f"Без предобусловливателя PCG не сошелся за {plain.iterations} итераций "
                            f"(невязка {plain.relative_residual:.3e})"
                        )

            started = time.perf_counter()
            x, report = operator.solve(system, precond, tol, max_it)
            result.timings.pcg += time.perf_counter() - started
            if not report.converged:
                raise ConvergenceError(
                    "interface PCG did not converge", step, report.iterations, report.relative_residual
                )

            result.iterations.append(report.iterations)
            estimate = report.condition_estimate()
            if estimate is not None:
                result.condition_estimates.append(estimate)
            state = FieldState.from_vector(x, problem.mesh.n_nodes)
            logger.debug(f"Шаг {step}/{params.n_steps}: t={t_n:.5f}, {report.iterations} итераций PCG")
    finally:
        if operator is not None:
            operator.close()

    result.state = state
    result.timings.assembly = problem.assembler.assembly_seconds
    result.t_final = params.n_steps * params.dt
    return result


def _record(config: RunConfig, mode: RunMode, nd: int, ratio: int, m: int, params: ModelParams) -> ResultRecord:
    return ResultRecord(
        mode=mode,
        nd=nd,
        ratio=ratio,
        m=m,
        nu=params.poisson_ratio,
        kappa=params.permeability,
        precond=config.precond,
        primal=config.primal,
        dt=params.dt,
    )


# ==================== Modes ====================


def run_solve(
    config: RunConfig,
    nd: int | None = None,
    ratio: int | None = None,
    regime: tuple[float, float] | None = None,
    compare_unpreconditioned: bool = False,
    mode: RunMode = RunMode.SOLVE,
) -> ResultRecord:
    """
    Полный цикл по времени для одной ячейки (nd, H/h, ν, κ).

    Несходимость шага не прерывает программу: возвращается запись с
    converged=False и диагностикой.
    """
    nd = config.nsub[0] if nd is None else nd
    ratio = config.ratio[0] if ratio is None else ratio
    nu, kappa = config.regimes[0] if regime is None else regime
    m = nd * ratio
    params = config.model_params(nu, kappa)
    record = _record(config, mode, nd, ratio, m, params)

    logger.info(f"Запуск: nd={nd}, H/h={ratio}, m={m}, ν={nu}, κ={kappa}, шагов={params.n_steps}")
    started = time.perf_counter()
    problem = build_problem(m, nd, params, primal=config.primal)
    try:
        loop = run_time_loop(
            problem, config.precond, config.tol, config.max_iterations, config.threads, compare_unpreconditioned
        )
    except BiotFetidpError as e:
        logger.error(f"Запуск прерван: {e}")
        record.converged = False
        record.passed = False
        record.message = str(e)
        return record

    record.iterations = loop.iterations
    record.finalize_iterations()
    record.condition_estimate = max(loop.condition_estimates) if loop.condition_estimates else None
    record.unpreconditioned_iterations = loop.first_step_unpreconditioned
    record.unpreconditioned_converged = loop.first_step_unpreconditioned_converged
    record.errors = error_norms(loop.state, problem.mesh, params, loop.t_final)
    record.timings = loop.timings
    logger.info(
        f"Готово за {time.perf_counter() - started:.2f}s: итерации max={record.max_iterations}, "
        f"mean={record.mean_iterations:.2f}; e_u={record.errors.e_u:.3e}, "
        f"e_z={record.errors.e_z:.3e}, e_p={record.errors.e_p:.3e}"
    )
    return record


def _relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff / scale if scale > 0.0 else diff


def run_oracle_check(
    config: RunConfig,
    nd: int | None = None,
    ratio: int | None = None,
    regime: tuple[float, float] | None = None,
) -> ResultRecord:
    """
    Один шаг по времени: FETI-DP против монолитного прямого решения.

    Raises:
        InvalidArgumentError: если m превышает допустимый размер прямого решения
    """
    nd = config.nsub[0] if nd is None else nd
    ratio = config.ratio[0] if ratio is None else ratio
    nu, kappa = config.regimes[0] if regime is None else regime
    m = nd * ratio
    if m > settings.oracle_max_elements_per_side:
        raise InvalidArgumentError(
            f"oracle check needs m <= {settings.oracle_max_elements_per_side}, got m={m}"
        )
    params = config.model_params(nu, kappa)
    record = _record(config, RunMode.ORACLE_CHECK, nd, ratio, m, params)

    problem = build_problem(m, nd, params, primal=config.primal)
    system = problem.assembler.assemble(params.dt, FieldState.zeros(problem.mesh))

    started = time.perf_counter()
    direct = DirectSolver.build(system).solve(system)
    record.timings.factorization = time.perf_counter() - started

    with build_fetidp(system, problem.dofmap, problem.partition, config.precond, config.threads) as operator:
        started = time.perf_counter()
        x, report = operator.solve(system, config.precond, config.tol, config.max_iterations)
        record.timings.pcg = time.perf_counter() - started
    record.timings.assembly = problem.assembler.assembly_seconds

    nu_dofs = 2 * problem.mesh.n_nodes
    fields = {
        "u": slice(0, nu_dofs),
        "z": slice(nu_dofs, 2 * nu_dofs),
        "p": slice(2 * nu_dofs, None),
    }
    record.oracle_difference = {name: _relative_difference(x[s], direct[s]) for name, s in fields.items()}
    record.iterations = [report.iterations]
    record.finalize_iterations()
    record.converged = report.converged
    worst = max(record.oracle_difference, key=record.oracle_difference.get)
    record.passed = report.converged and record.oracle_difference[worst] <= settings.oracle_tolerance
    if not record.passed:
        record.message = f"field {worst} differs by {record.oracle_difference[worst]:.3e}"
        logger.warning(f"Проверка оракулом не пройдена (m={m}, nd={nd}): {record.message}")
    else:
        logger.info(f"Проверка оракулом пройдена (m={m}, nd={nd}): max разница {record.oracle_difference[worst]:.3e}")
    return record


def convergence_rates(coarse: ResultRecord, fine: ResultRecord) -> dict[str, float]:
    """Observed orders log(e_H/e_h)/log(m_h/m_H) per field."""
    factor = math.log(fine.m / coarse.m)
    rates = {}
    for name in RATE_THRESHOLDS:
        e_coarse, e_fine = getattr(coarse.errors, name), getattr(fine.errors, name)
        rates[name] = math.log(e_coarse / e_fine) / factor if e_coarse > 0 and e_fine > 0 else math.nan
    return rates


def run_convergence(config: RunConfig) -> list[ResultRecord]:
    """Ошибки в момент t_end на последовательности сеток, Δt ∝ h."""
    nd = config.nsub[0]
    nu, kappa = config.regimes[0]
    records: list[ResultRecord] = []
    for m in sorted(config.mesh_sizes):
        if m % nd:
            raise InvalidArgumentError(f"mesh size {m} is not divisible by nd={nd}")
        dt = config.dt * 8.0 / m
        params = config.model_params(nu, kappa, dt=dt)
        record = _record(config, RunMode.CONVERGE, nd, m // nd, m, params)
        problem = build_problem(m, nd, params, primal=config.primal)
        try:
            loop = run_time_loop(problem, config.precond, config.tol, config.max_iterations, config.threads)
        except BiotFetidpError as e:
            logger.error(f"Сетка m={m} не посчитана: {e}")
            record.converged = False
            record.passed = False
            record.message = str(e)
            records.append(record)
            continue
        record.iterations = loop.iterations
        record.finalize_iterations()
        record.errors = error_norms(loop.state, problem.mesh, params, loop.t_final)
        record.timings = loop.timings
        if records and records[-1].errors is not None:
            record.rates = convergence_rates(records[-1], record)
            record.passed = all(record.rates[k] >= v for k, v in RATE_THRESHOLDS.items()) and all(
                getattr(record.errors, k) < getattr(records[-1].errors, k) for k in RATE_THRESHOLDS
            )
        logger.info(f"Сетка m={m}, δ={params.delta_stab:g}: e_u={record.errors.e_u:.3e}, e_z={record.errors.e_z:.3e}, e_p={record.errors.e_p:.3e}")
        records.append(record)
    return records


@dataclass
class ScalabilityTable:
    """Records of the sweep plus the acceptance checks evaluated on them."""

    records: list[ResultRecord]
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values()) and all(r.passed is not False for r in self.records)

    def cell(self, nd: int, ratio: int, nu: float, kappa: float) -> ResultRecord | None:
        for record in self.records:
            if record.nd == nd and record.ratio == ratio and math.isclose(record.nu, nu) and math.isclose(record.kappa, kappa):
                return record
        return None


def evaluate_scalability(table: ScalabilityTable) -> dict[str, bool]:
    """Сравнение с опубликованными числами итераций и проверка ограниченности по N."""
    checks: dict[str, bool] = {}
    compressible, incompressible = DEFAULT_REGIMES
    ratios = sorted({r.ratio for r in table.records})
    for record in table.records:
        ref = reference_iterations(record.nu, record.kappa, record.ratio, record.nd)
        if ref is not None and record.converged and record.precond == PreconditionerKind.DIRICHLET:
            record.passed = record.max_iterations <= REFERENCE_FACTOR * ref
            if not record.passed:
                record.message = f"{record.max_iterations} iterations, reference {ref}"
        if record.nd >= 4 and record.unpreconditioned_iterations is not None and record.iterations:
            key = f"preconditioner_effect:nd={record.nd},H/h={record.ratio},nu={record.nu}"
            checks[key] = record.unpreconditioned_iterations >= record.iterations[0]

    for ratio in ratios:
        counts = [
            r.max_iterations
            for r in table.records
            if r.ratio == ratio and r.converged and math.isclose(r.nu, compressible[0]) and math.isclose(r.kappa, compressible[1])
        ]
        if len(counts) > 1:
            checks[f"flat_compressible:H/h={ratio}"] = max(counts) - min(counts) <= COMPRESSIBLE_SPREAD
        lo = table.cell(2, ratio, *incompressible)
        hi = table.cell(8, ratio, *incompressible)
        if lo is not None and hi is not None and lo.converged and hi.converged:
            checks[f"bounded_incompressible:H/h={ratio}"] = hi.max_iterations <= lo.max_iterations + INCOMPRESSIBLE_GROWTH

    for name, ok in checks.items():
        if not ok:
            logger.warning(f"Критерий не выполнен: {name}")
    return checks


def run_scalability(config: RunConfig, cell_workers: int | None = None) -> ScalabilityTable:
    """
    Перебор nd × H/h × (ν, κ); ошибка ячейки записывается, перебор продолжается.

    Ячейки независимы и считаются параллельно в cell_workers потоках, потоки
    подобластей делятся между ними. Порядок записей не зависит от порядка завершения.
    """
    cell_workers = settings.scalability_cell_workers if cell_workers is None else cell_workers
    cells = [(nd, ratio, regime) for regime in config.regimes for ratio in config.ratio for nd in config.nsub]
    workers = max(1, min(cell_workers, len(cells)))
    cell_config = config.model_copy(update={"threads": max(1, config.threads // workers)})

    def solve_cell(cell: tuple[int, int, tuple[float, float]]) -> ResultRecord:
        nd, ratio, regime = cell
        return run_solve(
            cell_config, nd=nd, ratio=ratio, regime=regime, compare_unpreconditioned=True, mode=RunMode.SCALABILITY
        )

    logger.info(f"Таблица масштабируемости: {len(cells)} ячеек, {workers} параллельно, {cell_config.threads} потоков на ячейку")
    if workers == 1:
        records = [solve_cell(cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="cell") as executor:
            records = list(executor.map(solve_cell, cells))
    table = ScalabilityTable(records=records)
    table.checks = evaluate_scalability(table)
    return table


# ==================== Dispatch ====================


@dataclass
class RunOutcome:
    records: list[ResultRecord]
    passed: bool
    table: ScalabilityTable | None = None


def run_experiment(config: RunConfig) -> RunOutcome:
    """Запускает режим из конфигурации и собирает записи."""
    logger.info(f"Режим {config.mode.value}: nd={config.nsub}, H/h={config.ratio}, режимы={config.regimes}")
    if config.mode == RunMode.ORACLE_CHECK:
        cap = settings.oracle_max_elements_per_side
        oversized = sorted({nd * ratio for nd in config.nsub for ratio in config.ratio if nd * ratio > cap})
        if oversized:
            raise InvalidArgumentError(f"oracle check needs m <= {cap}, requested m={oversized}")

    if config.mode == RunMode.SCALABILITY:
        table = run_scalability(config)
        return RunOutcome(records=table.records, passed=table.passed, table=table)

    if config.mode == RunMode.CONVERGE:
        records = run_convergence(config)
        return RunOutcome(records=records, passed=all(r.passed is not False for r in records))

    records = []
    for nu, kappa in config.regimes:
        for ratio in config.ratio:
            for nd in config.nsub:
                if config.mode == RunMode.ORACLE_CHECK:
                    try:
                        record = run_oracle_check(config, nd, ratio, (nu, kappa))
                    except BiotFetidpError as e:
                        params = config.model_params(nu, kappa)
                        record = _record(config, RunMode.ORACLE_CHECK, nd, ratio, nd * ratio, params)
                        record.passed = False
                        record.converged = False
                        record.message = str(e)
                        logger.error(f"Проверка оракулом отклонена: {e}")
                else:
                    record = run_solve(config, nd, ratio, (nu, kappa))
                records.append(record)
    passed = all(r.converged and r.passed is not False for r in records)
    return RunOutcome(records=records, passed=passed)
