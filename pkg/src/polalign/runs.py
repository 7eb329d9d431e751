"""Experiment drivers behind the CLI subcommands."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .config import ConfigError, ExperimentConfig, MonitorSpec
from .io import (
    ALARM_HEADER,
    COUNTS_HEADER,
    DataError,
    METRICS_HEADER,
    TRACE_HEADER,
    atomic_writer,
    counts_row,
    fmt,
    metrics_row,
    read_counts,
    trace_row,
    write_rows,
)
from .metrics import MetricsReport, metrics_from_record
from .optics import CoincidenceRecord, sample_window
from .optimizer import IterationLog, run_alignment
from .quantum import BellKind

__all__ = ["run_simulate", "run_align", "run_metrics", "run_monitor", "Alarm", "monitor_stream"]

log = logging.getLogger(__name__)


def _output(cfg: ExperimentConfig) -> str:
    if not cfg.output_path:
        raise ConfigError("no output path (set output_path or pass --out)")
    return cfg.output_path


def run_simulate(cfg: ExperimentConfig) -> list[tuple[CoincidenceRecord, MetricsReport]]:
    """Sample ``simulate.windows`` windows at fixed EPC settings and write a counts file.

    Returns the records together with their in-process metrics.
    """
    if cfg.optimizer.analytic:
        raise ConfigError("simulate: analytic mode has no counts to write; use align --analytic")
    apparatus = cfg.build_apparatus()
    epc = cfg.simulate_epc(apparatus)
    out = []
    for i in range(cfg.simulate.windows):
        rec = sample_window(apparatus, epc, cfg.simulate.duration_s, (cfg.seed, i))
        report = metrics_from_record(rec) if (rec.singles > 0).all() else None
        out.append((rec, report))
    with atomic_writer(_output(cfg)) as fh:
        write_rows(fh, COUNTS_HEADER, (counts_row(i, rec) for i, (rec, _) in enumerate(out)))
    return out


def run_align(cfg: ExperimentConfig) -> list[IterationLog]:
    """Run the alignment loop; write the trace CSV and a JSON summary next to it."""
    apparatus = cfg.build_apparatus()
    opt = cfg.build_optimizer(apparatus)
    trace = run_alignment(apparatus, opt)
    path = _output(cfg)
    with atomic_writer(path) as fh:
        write_rows(fh, TRACE_HEADER, (trace_row(e, opt.window_duration) for e in trace))
    summary = summarize(trace, opt.window_duration)
    if path != "-":
        with atomic_writer(str(path) + ".summary.json") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return trace


def summarize(trace: list[IterationLog], window_duration: float) -> dict:
    final = trace[-1]
    best = max(trace, key=lambda e: e.h_total)
    return {
        "iterations": len(trace),
        "final": {
            "h_a": final.h_a,
            "h_b": final.h_b,
            "h_total": final.h_total,
            "qber": None if final.qber is None else {k.value: v for k, v in final.qber.items()},
            "angles": final.angles.vector.tolist(),
        },
        "best_h_total": best.h_total,
        "best_iteration": best.iteration,
        "windows": final.wall_windows,
        "measurement_time_s": final.wall_windows * window_duration,
    }


def _safe_metrics(index: int, rec: CoincidenceRecord, path: str) -> MetricsReport:
    try:
        return metrics_from_record(rec)
    except ValueError as exc:
        raise DataError(f"window {index}: {exc}", path) from None


def run_metrics(cfg: ExperimentConfig) -> list[tuple[int, MetricsReport]]:
    """Compute one metrics row per window of an external counts file."""
    path = cfg.input_path
    rows = [(i, _safe_metrics(i, rec, path)) for i, rec in read_counts(path)]
    with atomic_writer(_output(cfg)) as fh:
        write_rows(fh, METRICS_HEADER, (metrics_row(i, r) for i, r in rows))
    return rows


@dataclass(frozen=True)
class Alarm:
    window_index: int
    reason: str
    h_total: float
    qber: float | None
    run_length: int

    def row(self) -> list[str]:
        return [str(self.window_index), self.reason, fmt(self.h_total), fmt(self.qber), str(self.run_length)]


def _watched_qber(report: MetricsReport, kind) -> float | None:
    if report.qber is None:
        return None
    if kind == "min":
        return min(report.qber.values())
    return report.qber[BellKind(kind)]


def monitor_stream(
    windows: Iterable[tuple[int, MetricsReport]], spec: MonitorSpec
) -> Iterator[Alarm]:
    """Yield an alarm for every window where the entropy has stayed below threshold
    for ``patience`` consecutive windows, or where the watched QBER exceeds its threshold."""
    run = 0
    for index, report in windows:
        run = run + 1 if report.h_total < spec.h_threshold else 0
        q = _watched_qber(report, spec.qber_kind)
        if run >= spec.patience:
            yield Alarm(index, "entropy", report.h_total, q, run)
        if q is not None and spec.qber_threshold is not None and q > spec.qber_threshold:
            yield Alarm(index, "qber", report.h_total, q, run)


def run_monitor(cfg: ExperimentConfig, stream: IO[str] | None = None) -> list[Alarm]:
    """Stream a counts file (or ``-`` for stdin) through the metrics and alarm logic."""
    path = cfg.input_path
    source = stream if stream is not None else path
    reports = ((i, _safe_metrics(i, rec, path)) for i, rec in read_counts(source))
    alarms = []
    out = _output(cfg)
    with atomic_writer(out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ALARM_HEADER)
        for alarm in monitor_stream(reports, cfg.monitor):
            alarms.append(alarm)
            writer.writerow(alarm.row())
            if out == "-":
                fh.flush()
    return alarms
