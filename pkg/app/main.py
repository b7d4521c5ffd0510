"""
Biot FETI-DP CLI

Точка входа: решение, проверка оракулом, исследование сходимости и
масштабируемости для тестовой задачи пороупругости.
"""

import argparse
import sys
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from app.models.schemas import OutputFormat, PreconditionerKind, PrimalSpace, RunConfig, RunMode
from app.services.experiment_service import run_experiment
from app.services.report_service import write_outputs
from app.utils.errors import BiotFetidpError
from app.utils.logger import logger, set_level
from config.settings import settings

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# CLI destination -> RunConfig field
_FIELD_MAP = {
    "mode": "mode",
    "nsub": "nsub",
    "ratio": "ratio",
    "nu": "nu",
    "perm": "perm",
    "young_modulus": "young_modulus",
    "biot_alpha": "biot_alpha",
    "storage": "storage",
    "delta_stab": "delta_stab",
    "dt": "dt",
    "t_end": "t_end",
    "tol": "tol",
    "max_it": "max_iterations",
    "precond": "precond",
    "primal": "primal",
    "threads": "threads",
    "out": "out",
    "format": "format",
    "mesh_sizes": "mesh_sizes",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biot-fetidp",
        description="Stabilized P1-P1-P0 Biot poroelasticity solved with FETI-DP",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  biot-fetidp --mode solve --nsub 2 --ratio 8
  biot-fetidp --mode oracle-check
  biot-fetidp --mode converge --mesh-sizes 8 16 32
  biot-fetidp --mode scalability --nsub 2 3 4 --ratio 8 --format json
        """,
    )
    parser.add_argument("--mode", choices=[m.value for m in RunMode], default=None, help="Run mode (default: solve)")
    parser.add_argument("--nsub", type=int, nargs="+", default=None, help="Subdomains per side")
    parser.add_argument("--ratio", type=int, nargs="+", default=None, help="Elements per subdomain side (H/h)")
    parser.add_argument("--nu", type=float, nargs="+", default=None, help="Poisson ratios, paired with --perm")
    parser.add_argument("--perm", type=float, nargs="+", default=None, help="Permeabilities, paired with --nu")
    parser.add_argument("--young-modulus", type=float, default=None, help="Young's modulus E")
    parser.add_argument("--biot-alpha", type=float, default=None, help="Biot-Willis coefficient")
    parser.add_argument("--storage", type=float, default=None, help="Constrained specific storage c0")
    parser.add_argument(
        "--delta-stab", type=float, default=None, help="Pressure-jump stabilization factor (default: 100, converge: 1e-3)"
    )
    parser.add_argument("--dt", type=float, default=None, help="Time step")
    parser.add_argument("--t-end", type=float, default=None, help="Final time")
    parser.add_argument("--tol", type=float, default=None, help="Relative PCG tolerance")
    parser.add_argument("--max-it", type=int, default=None, help="PCG iteration limit")
    parser.add_argument(
        "--precond", choices=[p.value for p in PreconditionerKind], default=None, help="Interface preconditioner"
    )
    parser.add_argument(
        "--primal", choices=[p.value for p in PrimalSpace], default=None, help="Coarse constraints (default: edge-averages)"
    )
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for subdomain work")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=None, help="Results file format")
    parser.add_argument("--mesh-sizes", type=int, nargs="+", default=None, help="Mesh sequence for converge mode")
    parser.add_argument("--config", type=Path, default=None, help="YAML file with run settings")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return parser


def load_yaml_config(path: Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    # YAML keys may use either dashes or underscores
    return {key.replace("-", "_"): value for key, value in data.items()}


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Settings defaults, then the YAML file, then explicit CLI flags."""
    values: dict[str, Any] = {
        "tol": settings.pcg_tolerance,
        "max_iterations": settings.pcg_max_iterations,
        "threads": settings.threads,
        "out": settings.output_dir,
    }
    if args.config is not None:
        for key, value in load_yaml_config(args.config).items():
            values[_FIELD_MAP.get(key, key)] = value
    for dest, field_name in _FIELD_MAP.items():
        value = getattr(args, dest)
        if value is not None:
            values[field_name] = value
    return RunConfig(**values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("DEBUG")

    try:
        config = build_run_config(args)
    except (ValidationError, ValueError, OSError, yaml.YAMLError) as e:
        logger.error(f"Некорректная конфигурация: {e}")
        return EXIT_USAGE

    try:
        outcome = run_experiment(config)
    except BiotFetidpError as e:
        logger.error(f"Запуск отклонен: {e}")
        return EXIT_USAGE

    write_outputs(outcome, config)
    if not outcome.passed:
        logger.warning("Не все проверки пройдены")
        return EXIT_CHECK_FAILED
    logger.info("Все проверки пройдены")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
