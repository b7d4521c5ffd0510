"""
Pydantic модели: физические параметры, конфигурация запуска и записи результатов
"""

from enum import Enum
from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

SCHEMA_VERSION = 1

# Defaults of the published test configuration
DEFAULT_YOUNG_MODULUS = 1000.0
DEFAULT_DELTA_STAB = 100.0
# converge mode: δ=100 dominates the error on meshes up to m=32, δ=1e-3 shows the asymptotic orders
CONVERGE_DELTA_STAB = 1e-3
DEFAULT_TIME_STEP = 0.00625
DEFAULT_END_TIME = 0.25
DEFAULT_REGIMES: tuple[tuple[float, float], ...] = ((0.3, 1e-2), (0.4999, 1e-7))


class RunMode(str, Enum):
    """Режимы запуска"""

    SOLVE = "solve"
    ORACLE_CHECK = "oracle-check"
    CONVERGE = "converge"
    SCALABILITY = "scalability"


class PreconditionerKind(str, Enum):
    """Варианты предобуславливателя интерфейсной задачи"""

    DIRICHLET = "dirichlet"
    DIRICHLET_A_ONLY = "dirichlet-a-only"
    NONE = "none"


class PrimalSpace(str, Enum):
    """Primal constraints of the FETI-DP coarse space"""

    VERTICES = "vertices"
    EDGE_AVERAGES = "edge-averages"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class ModelParams(BaseModel):
    """Physical and time-stepping parameters of the poroelastic model."""

    model_config = {"frozen": True}

    young_modulus: float = Field(DEFAULT_YOUNG_MODULUS, gt=0)
    poisson_ratio: float = Field(0.3, gt=-1.0, lt=0.5)
    permeability: float = Field(1e-2, gt=0)
    biot_alpha: float = Field(1.0, gt=0)
    storage: float = Field(0.0, ge=0)
    delta_stab: float = Field(DEFAULT_DELTA_STAB, ge=0)
    dt: float = Field(DEFAULT_TIME_STEP, gt=0)
    t_end: float = Field(DEFAULT_END_TIME, gt=0)

    @property
    def lam(self) -> float:
        """First Lamé parameter (plane strain)."""
        e, nu = self.young_modulus, self.poisson_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def mu(self) -> float:
        """Shear modulus."""
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


class ErrorNorms(BaseModel):
    """L2 errors against the manufactured solution."""

    e_u: float
    e_z: float
    e_p: float


class RunConfig(BaseModel):
    """
    Validated configuration of one CLI invocation.

    List-valued fields left as None are filled from the mode defaults; nu and
    perm are zipped into (nu, kappa) regime pairs.
    """

    mode: RunMode = RunMode.SOLVE
    nsub: list[int] | None = None
    ratio: list[int] | None = None
    nu: list[float] | None = None
    perm: list[float] | None = None
    young_modulus: float = Field(DEFAULT_YOUNG_MODULUS, gt=0)
    biot_alpha: float = Field(1.0, gt=0)
    storage: float = Field(0.0, ge=0)
    delta_stab: float | None = Field(None, ge=0)
    dt: float = Field(DEFAULT_TIME_STEP, gt=0)
    t_end: float = Field(DEFAULT_END_TIME, gt=0)
    tol: float = Field(1e-8, gt=0)
    max_iterations: int = Field(500, ge=1)
    precond: PreconditionerKind = PreconditionerKind.DIRICHLET
    primal: PrimalSpace = PrimalSpace.EDGE_AVERAGES
    threads: int = Field(1, ge=1)
    out: str = "results"
    format: OutputFormat = OutputFormat.CSV
    mesh_sizes: list[int] | None = None

    @field_validator("nsub", "ratio", "mesh_sizes")
    @classmethod
    def _positive_counts(cls, value: list[int] | None) -> list[int] | None:
        if value is not None and any(v < 1 for v in value):
            raise ValueError("counts must be positive")
        return value

    @model_validator(mode="after")
    def _fill_mode_defaults(self) -> "RunConfig":
        defaults = _MODE_DEFAULTS[self.mode]
        if self.nsub is None:
            self.nsub = list(defaults["nsub"])
        if self.ratio is None:
            self.ratio = list(defaults["ratio"])
        if self.nu is None and self.perm is None:
            self.nu = [pair[0] for pair in defaults["regimes"]]
            self.perm = [pair[1] for pair in defaults["regimes"]]
        elif self.nu is None or self.perm is None:
            raise ValueError("--nu and --perm must be given together")
        if len(self.nu) != len(self.perm):
            raise ValueError("--nu and --perm must have the same number of values")
        if self.mesh_sizes is None:
            self.mesh_sizes = list(defaults.get("mesh_sizes", []))
        if self.delta_stab is None:
            self.delta_stab = defaults.get("delta_stab", DEFAULT_DELTA_STAB)
        return self

    @property
    def regimes(self) -> list[tuple[float, float]]:
        return list(zip(self.nu or [], self.perm or [], strict=True))

    def model_params(self, nu: float, kappa: float, dt: float | None = None) -> ModelParams:
        return ModelParams(
            young_modulus=self.young_modulus,
            poisson_ratio=nu,
            permeability=kappa,
            biot_alpha=self.biot_alpha,
            storage=self.storage,
            delta_stab=self.delta_stab,
            dt=self.dt if dt is None else dt,
            t_end=self.t_end,
        )


_MODE_DEFAULTS: dict[RunMode, dict[str, Any]] = {
    RunMode.SOLVE: {"nsub": [2], "ratio": [8], "regimes": DEFAULT_REGIMES[:1]},
    RunMode.ORACLE_CHECK: {"nsub": [2, 4], "ratio": [4, 8], "regimes": DEFAULT_REGIMES},
    RunMode.CONVERGE: {
        "nsub": [2],
        "ratio": [],
        "regimes": DEFAULT_REGIMES[:1],
        "mesh_sizes": [8, 16, 32],
        "delta_stab": CONVERGE_DELTA_STAB,
    },
    RunMode.SCALABILITY: {"nsub": list(range(2, 9)), "ratio": [8, 12, 16], "regimes": DEFAULT_REGIMES},
}


class PhaseTimings(BaseModel):
    """Wall-clock seconds spent per phase."""

    assembly: float = 0.0
    factorization: float = 0.0
    pcg: float = 0.0


class ResultRecord(BaseModel):
    """Self-describing result of one experiment cell."""

    schema_version: int = SCHEMA_VERSION
    mode: RunMode
    nd: int
    ratio: int
    m: int
    nu: float
    kappa: float
    precond: PreconditionerKind
    primal: PrimalSpace = PrimalSpace.EDGE_AVERAGES
    dt: float
    iterations: list[int] = Field(default_factory=list)
    max_iterations: int = 0
    mean_iterations: float = 0.0
    condition_estimate: float | None = None
    unpreconditioned_iterations: int | None = None
    unpreconditioned_converged: bool | None = None
    errors: ErrorNorms | None = None
    oracle_difference: dict[str, float] | None = None
    rates: dict[str, float] | None = None
    timings: PhaseTimings = Field(default_factory=PhaseTimings)
    converged: bool = True
    passed: bool | None = None
    message: str | None = None

    def finalize_iterations(self) -> None:
        if self.iterations:
            self.max_iterations = max(self.iterations)
            self.mean_iterations = sum(self.iterations) / len(self.iterations)
