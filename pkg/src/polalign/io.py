"""CSV schemas for counts, metrics, alignment traces and monitor alarms."""

from __future__ import annotations

import contextlib
import csv
import os
import sys
import tempfile
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .metrics import MetricsReport
from .optics import ARMS, LABELS, SINGLES_CHANNELS, CoincidenceRecord
from .quantum import BellKind

__all__ = [
    "DataError",
    "COUNTS_HEADER",
    "METRICS_HEADER",
    "TRACE_HEADER",
    "ALARM_HEADER",
    "fmt",
    "counts_row",
    "read_counts",
    "metrics_row",
    "trace_row",
    "atomic_writer",
]

PAIR_LABELS = tuple(j + k for j in LABELS for k in LABELS)
COUNTS_HEADER = (
    ("window_index", "duration_s")
    + tuple(f"C_{p}" for p in PAIR_LABELS)
    + tuple(f"S_{c.replace('_', '')}" for c in SINGLES_CHANNELS)
)
QBER_COLUMNS = tuple(f"qber_{k.value}" for k in BellKind)
METRICS_HEADER = (
    ("window_index", "h_a", "h_b", "h_total")
    + QBER_COLUMNS
    + ("beta",)
    + tuple(f"h_same_{side}_{j}" for side in "AB" for j in LABELS)
    + tuple(f"h_diff_{side}_{j}" for side in "AB" for j in LABELS)
)
ANGLE_COLUMNS = tuple(f"{arm.value}_{p}" for arm in ARMS for p in (1, 2, 3))
TRACE_HEADER = (
    ("iteration", "step_deg")
    + ANGLE_COLUMNS
    + ("h_a", "h_b", "h_total")
    + QBER_COLUMNS
    + ("trials_used", "wall_windows", "measurement_time_s")
)
ALARM_HEADER = ("window_index", "reason", "h_total", "qber", "run_length")


class DataError(ValueError):
    """Malformed input data, with the offending location."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


def fmt(x) -> str:
    """Decimal text with 12 significant digits; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def counts_row(index: int, record: CoincidenceRecord) -> list[str]:
    return (
        [str(index), fmt(record.duration)]
        + [str(int(c)) for c in record.counts.reshape(16)]
        + [str(int(s)) for s in record.singles]
    )


def _parse_int(text: str, column: str, path: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise DataError(f"column {column}: expected an integer, got {text!r}", path, line) from None
    if value < 0:
        raise DataError(f"column {column}: negative count {value}", path, line)
    return value


def read_counts(source: str | Path | IO[str]) -> Iterator[tuple[int, CoincidenceRecord]]:
    """Stream ``(window_index, record)`` pairs from a counts CSV, validating every row."""
    if isinstance(source, (str, Path)):
        name = str(source)
        if name == "-":
            yield from _read_counts(sys.stdin, "<stdin>")
            return
        try:
            fh = open(source, newline="")
        except OSError as exc:
            raise DataError(f"cannot open: {exc.strerror}", name) from None
        with fh:
            yield from _read_counts(fh, name)
    else:
        yield from _read_counts(source, getattr(source, "name", "<stream>"))


def _read_counts(fh: IO[str], name: str) -> Iterator[tuple[int, CoincidenceRecord]]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file, expected a header", name, 1) from None
    if tuple(h.strip() for h in header) != COUNTS_HEADER:
        raise DataError("header does not match the counts schema", name, 1)
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(COUNTS_HEADER):
            raise DataError(f"expected {len(COUNTS_HEADER)} columns, got {len(row)}", name, line)
        index = _parse_int(row[0], "window_index", name, line)
        try:
            duration = float(row[1])
        except ValueError:
            raise DataError(f"column duration_s: expected a number, got {row[1]!r}", name, line) from None
        if not duration > 0:
            raise DataError(f"column duration_s: must be positive, got {duration}", name, line)
        values = [_parse_int(t, col, name, line) for t, col in zip(row[2:], COUNTS_HEADER[2:])]
        record = CoincidenceRecord(
            counts=np.array(values[:16]).reshape(4, 4), singles=np.array(values[16:]), duration=duration
        )
        yield index, record


def metrics_row(index: int, report: MetricsReport) -> list[str]:
    qber = [None] * 4 if report.qber is None else [report.qber[k] for k in BellKind]
    return (
        [str(index), fmt(report.h_a), fmt(report.h_b), fmt(report.h_total)]
        + [fmt(q) for q in qber]
        + [fmt(report.beta)]
        + [fmt(v) for v in report.h_same.reshape(8)]
        + [fmt(v) for v in report.h_diff.reshape(8)]
    )


def trace_row(entry, window_duration: float) -> list[str]:
    qber = [None] * 4 if entry.qber is None else [entry.qber[k] for k in BellKind]
    return (
        [str(entry.iteration), fmt(entry.step_deg)]
        + [fmt(a) for a in entry.angles.vector]
        + [fmt(entry.h_a), fmt(entry.h_b), fmt(entry.h_total)]
        + [fmt(q) for q in qber]
        + [str(entry.trials_used), str(entry.wall_windows), fmt(entry.wall_windows * window_duration)]
    )


@contextlib.contextmanager
def atomic_writer(path: str | Path) -> Iterator[IO[str]]:
    """Write to a temporary sibling and rename into place on success; ``-`` means stdout."""
    if str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def write_rows(fh: IO[str], header: Iterable[str], rows: Iterable[list[str]]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
