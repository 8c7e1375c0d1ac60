"""Summary tables built from one or more `neld run` output directories."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ResultsCorruptedError
from .results import (
    FITTED,
    MEASURED,
    PROFILES_FILE,
    REPORT_FILE,
    REPORT_LONG_FILE,
    SUMMARY_FILE,
    Cell,
    Column,
    Table,
    parse_float,
    parse_int,
    read_table,
    write_table,
)

logger = logging.getLogger(__name__)

_PER_OBSERVABLE = ("lambda_hat", "r_squared")
_PROFILE_COLUMNS = ("observable", "bin", "theta_lo", "theta_hi", "count", "mean", "stderr")


@dataclass(frozen=True)
class RunTables:
    """Tables of one results directory."""

    name: str
    profiles: Table
    summary: Table

    @property
    def summary_row(self) -> dict[str, str]:
        return self.summary.records()[0]


def load_run(directory: Path) -> RunTables:
    """Read profiles.tsv and summary.tsv from a results directory.

    Raises:
        ResultsNotFoundError: If either file is missing.
        ResultsCorruptedError: If a file cannot be parsed or the summary is not one row.
    """
    profiles = read_table(directory / PROFILES_FILE)
    for name in _PROFILE_COLUMNS:
        profiles.column(name)
    summary = read_table(directory / SUMMARY_FILE)
    if len(summary.rows) != 1:
        raise ResultsCorruptedError(
            f"{directory / SUMMARY_FILE}: expected one data row, got {len(summary.rows)}"
        )
    return RunTables(directory.name or str(directory), profiles, summary)


def _split(name: str) -> tuple[str, str]:
    quantity, _, subject = name.partition(".")
    return quantity, subject


def build_report(directories: Sequence[Path], out: Path) -> list[Path]:
    """Write report.tsv (one row per run, observable and phase bin) and report_long.tsv.

    Returns:
        Paths of the two written files.
    """
    runs = [load_run(directory) for directory in directories]
    # Runs may differ in observables or drift exponents; missing cells stay empty.
    global_columns: dict[str, Column] = {}
    for tables in runs:
        for column in tables.summary.columns:
            if _split(column.name)[0] in _PER_OBSERVABLE or column.name.startswith(("lln_", "fit_window")):
                continue
            global_columns.setdefault(column.name, column)

    wide_columns = [
        Column("run"),
        Column("observable"),
        Column("bin"),
        Column("theta_lo", "time", MEASURED),
        Column("theta_hi", "time", MEASURED),
        Column("count", "samples", MEASURED),
        Column("mean", "observable", MEASURED),
        Column("stderr", "observable", MEASURED),
        Column("lambda_hat", "1/time", FITTED),
        Column("r_squared", "1", FITTED),
        *global_columns.values(),
    ]
    long_columns = [
        Column("run"),
        Column("observable"),
        Column("quantity"),
        Column("unit"),
        Column("provenance"),
        Column("theta", "time", MEASURED),
        Column("value", "mixed", MEASURED),
        Column("stderr", "mixed", MEASURED),
    ]

    wide: list[list[Cell]] = []
    long: list[list[Cell]] = []
    for tables in runs:
        summary = tables.summary_row
        for record in tables.profiles.records():
            name = record["observable"]
            lo, hi = parse_float(record["theta_lo"]), parse_float(record["theta_hi"])
            mean, stderr = parse_float(record["mean"]), parse_float(record["stderr"])
            wide.append(
                [tables.name, name, parse_int(record["bin"]), lo, hi, parse_int(record["count"]), mean, stderr]
                + [parse_float(summary.get(f"{quantity}.{name}", "")) for quantity in _PER_OBSERVABLE]
                + [summary.get(column) for column in global_columns]
            )
            long.append([tables.name, name, "profile_mean", "observable", MEASURED, 0.5 * (lo + hi), mean, stderr])

        for column in tables.summary.columns:
            quantity, subject = _split(column.name)
            long.append(
                [
                    tables.name,
                    subject,
                    quantity,
                    column.unit or "",
                    column.provenance or "",
                    None,
                    summary[column.name],
                    None,
                ]
            )

    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_table(out / REPORT_FILE, wide_columns, wide),
        write_table(out / REPORT_LONG_FILE, long_columns, long),
    ]
    for path in written:
        logger.info("Wrote %s", path)
    return written
