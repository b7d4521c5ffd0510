"""
Сервис отчетов: CSV / JSON записи результатов и текстовая таблица масштабируемости.
"""

import csv
import json
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader

from app.models.schemas import OutputFormat, ResultRecord, RunConfig
from app.services.experiment_service import RunOutcome, ScalabilityTable
from app.utils.logger import get_logger

logger = get_logger(__name__)

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"
TABLE_FILENAME = "table1_repro.txt"

# Wall-clock timings are left out so that reruns give identical files.
CSV_COLUMNS = [
    "schema_version",
    "mode",
    "nd",
    "ratio",
    "m",
    "nu",
    "kappa",
    "precond",
    "primal",
    "dt",
    "n_steps",
    "max_iterations",
    "mean_iterations",
    "condition_estimate",
    "unpreconditioned_iterations",
    "unpreconditioned_converged",
    "e_u",
    "e_z",
    "e_p",
    "diff_u",
    "diff_z",
    "diff_p",
    "rate_u",
    "rate_z",
    "rate_p",
    "converged",
    "passed",
    "message",
]


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def record_to_row(record: ResultRecord) -> dict[str, str]:
    errors = record.errors.model_dump() if record.errors else {}
    diff = record.oracle_difference or {}
    rates = record.rates or {}
    row = {
        "schema_version": record.schema_version,
        "mode": record.mode.value,
        "nd": record.nd,
        "ratio": record.ratio,
        "m": record.m,
        "nu": record.nu,
        "kappa": record.kappa,
        "precond": record.precond.value,
        "primal": record.primal.value,
        "dt": record.dt,
        "n_steps": len(record.iterations),
        "max_iterations": record.max_iterations,
        "mean_iterations": record.mean_iterations,
        "condition_estimate": record.condition_estimate,
        "unpreconditioned_iterations": record.unpreconditioned_iterations,
        "unpreconditioned_converged": record.unpreconditioned_converged,
        "e_u": errors.get("e_u"),
        "e_z": errors.get("e_z"),
        "e_p": errors.get("e_p"),
        "diff_u": diff.get("u"),
        "diff_z": diff.get("z"),
        "diff_p": diff.get("p"),
        "rate_u": rates.get("e_u"),
        "rate_z": rates.get("e_z"),
        "rate_p": rates.get("e_p"),
        "converged": record.converged,
        "passed": record.passed,
        "message": record.message,
    }
    return {key: _fmt(value) for key, value in row.items()}


def write_csv(records: list[ResultRecord], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record_to_row(record))
    return path


def write_json(records: list[ResultRecord], path: Path, checks: dict[str, bool] | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "records": [record.model_dump(mode="json") for record in records],
        "checks": checks or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def _regime_label(nu: float, kappa: float) -> str:
    return f"nu={nu:g},k={kappa:.0e}"


def render_scalability_table(table: ScalabilityTable, config: RunConfig) -> str:
    """Rows N = nd x nd, column groups H/h, one sub-column per (ν, κ) pair."""
    regimes = [{"nu": nu, "kappa": kappa, "label": _regime_label(nu, kappa)} for nu, kappa in config.regimes]
    ratios = list(config.ratio)
    cell_width = max(16, *(len(r["label"]) for r in regimes))
    group_width = cell_width * len(regimes) + 2 * (len(regimes) - 1)

    rows = []
    for nd in config.nsub:
        cells = []
        for ratio in ratios:
            for regime in regimes:
                record = table.cell(nd, ratio, regime["nu"], regime["kappa"])
                if record is None:
                    cells.append("-")
                elif not record.converged:
                    cells.append("failed")
                else:
                    cells.append(f"{record.max_iterations} ({record.mean_iterations:.1f})")
        rows.append({"label": f"{nd}x{nd}", "cells": cells})

    env = Environment(loader=FileSystemLoader(str(TEMPLATES_DIR)), trim_blocks=True, keep_trailing_newline=True)
    template = env.get_template(f"{TABLE_FILENAME}.j2")
    return template.render(
        precond=config.precond.value,
        primal=config.primal.value,
        delta_stab=config.delta_stab,
        dt=config.dt,
        young_modulus=config.young_modulus,
        tol=config.tol,
        ratios=ratios,
        regimes=regimes,
        rows=rows,
        checks=table.checks,
        cell_width=cell_width,
        group_width=group_width,
        line_width=8 + len(ratios) * len(regimes) * (cell_width + 2),
    )


def write_outputs(outcome: RunOutcome, config: RunConfig) -> list[Path]:
    """Записывает results.csv или results.json (и таблицу для режима scalability)."""
    out_dir = Path(config.out)
    written: list[Path] = []
    checks = outcome.table.checks if outcome.table else None
    if config.format == OutputFormat.JSON:
        written.append(write_json(outcome.records, out_dir / "results.json", checks))
    else:
        written.append(write_csv(outcome.records, out_dir / "results.csv"))
    if outcome.table is not None:
        path = out_dir / TABLE_FILENAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_scalability_table(outcome.table, config), encoding="utf-8")
        written.append(path)
    for path in written:
        logger.info(f"Результаты записаны: {path}")
    return written
