"""Atomic reads and writes of run output directories.

Every table is UTF-8, tab-separated, with one header row whose cells read
``name [unit; measured|fitted]`` for numeric columns. Floats use 17
significant digits so files are bit-exact for regression comparisons.
"""

from __future__ import annotations

import re
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ResultsCorruptedError, ResultsNotFoundError

CHAIN_FILE = "chain.tsv"
SERIES_FILE = "series.tsv"
PROFILES_FILE = "profiles.tsv"
SUMMARY_FILE = "summary.tsv"
REPORT_FILE = "report.tsv"
REPORT_LONG_FILE = "report_long.tsv"

MEASURED = "measured"
FITTED = "fitted"

_HEADER_RE = re.compile(r"^(?P<name>[^\[]+?)(?: \[(?P<unit>[^;\]]*); (?P<provenance>\w+)\])?$")

Cell = str | int | float | bool | None


@dataclass(frozen=True)
class Column:
    """Table column; unit and provenance are set for numeric columns only."""

    name: str
    unit: str | None = None
    provenance: str | None = None

    @property
    def header(self) -> str:
        if self.unit is None:
            return self.name
        return f"{self.name} [{self.unit}; {self.provenance or MEASURED}]"

    @classmethod
    def parse(cls, header: str) -> Column:
        match = _HEADER_RE.match(header)
        if match is None:
            raise ResultsCorruptedError(f"Malformed header cell: {header!r}")
        return cls(match["name"], match["unit"], match["provenance"])


def format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


# ---------------------------------------------------------------------------
# Write (atomic)
# ---------------------------------------------------------------------------

def atomic_write_text(path: Path, payload: str) -> None:
    """Write via temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = tempfile.NamedTemporaryFile(
        mode="w",
        dir=path.parent,
        suffix=".tmp",
        delete=False,
        encoding="utf-8",
        newline="\n",
    )
    try:
        fd.write(payload)
        fd.flush()
        fd.close()
        Path(fd.name).replace(path)
    except BaseException:
        fd.close()
        Path(fd.name).unlink(missing_ok=True)
        raise


def write_table(path: Path, columns: Sequence[Column], rows: Iterable[Sequence[Cell]]) -> Path:
    """Atomically write a tab-separated table with a single header row."""
    lines = ["\t".join(column.header for column in columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"Row has {len(row)} cells, expected {len(columns)}")
        lines.append("\t".join(format_cell(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Read
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Table:
    """Parsed table: columns plus raw string rows."""

    columns: list[Column]
    rows: list[list[str]]

    @property
    def names(self) -> list[str]:
        return [column.name for column in self.columns]

    def column(self, name: str) -> list[str]:
        try:
            index = self.names.index(name)
        except ValueError:
            raise ResultsCorruptedError(f"Missing column {name!r}") from None
        return [row[index] for row in self.rows]

    def records(self) -> list[dict[str, str]]:
        names = self.names
        return [dict(zip(names, row)) for row in self.rows]


def read_table(path: Path) -> Table:
    """Load a table written by write_table.

    Raises:
        ResultsNotFoundError: If the file does not exist.
        ResultsCorruptedError: If the file is empty or rows are ragged.
    """
    if not path.exists():
        raise ResultsNotFoundError(f"File not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ResultsCorruptedError(f"Failed to read {path}: {exc}") from exc

    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ResultsCorruptedError(f"Missing header row in {path}")
    columns = [Column.parse(cell) for cell in lines[0].split("\t")]
    rows = [line.split("\t") for line in lines[1:] if line]
    for number, row in enumerate(rows, start=2):
        if len(row) != len(columns):
            raise ResultsCorruptedError(
                f"{path}:{number}: {len(row)} cells, expected {len(columns)}"
            )
    return Table(columns, rows)


def parse_float(cell: str) -> float:
    """Parse a numeric cell; empty cells read as NaN."""
    if cell == "":
        return float("nan")
    try:
        return float(cell)
    except ValueError:
        raise ResultsCorruptedError(f"Not a number: {cell!r}") from None


def parse_int(cell: str) -> int:
    """Parse an integer cell such as a bin index or sample count."""
    try:
        return int(cell)
    except ValueError:
        raise ResultsCorruptedError(f"Not an integer: {cell!r}") from None
