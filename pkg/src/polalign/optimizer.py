"""Stochastic gradient ascent of the total coincidence entropy over the 12 paddle angles."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metrics import MetricsReport, compute_metrics, required_trials
from .optics import (
    ApparatusConfig,
    EpcSettings,
    expected_coincidence_rates,
    sample_window,
    singles_rates,
)
from .quantum import BellKind

__all__ = [
    "GradientMode",
    "OptimizerConfig",
    "IterationLog",
    "analytic_report",
    "analytic_cost",
    "evaluate_cost",
    "mean_report",
    "estimate_gradient",
    "run_alignment",
    "maximize_analytic",
]

log = logging.getLogger(__name__)


class GradientMode(str, enum.Enum):
    SIMULTANEOUS_PERTURBATION = "simultaneous_perturbation"
    COORDINATE_FORWARD_DIFFERENCE = "coordinate_forward_difference"


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the alignment loop.

    ``step_schedule`` lists (paddle step in degrees, iterations) phases; left
    empty it splits ``max_iterations`` into thirds at 10, 5 and 1 degree.
    ``learning_rate`` scales the normalized gradient in units of the current
    step, so the default moves the 12-angle vector by one step per iteration.
    """

    max_iterations: int = 300
    step_schedule: Sequence[tuple[float, int]] = ()
    trials_per_eval: int = 1
    adaptive_trials: bool = False
    target_sem: float = 0.01
    max_trials: int = 50
    window_duration: float = 5.0
    gradient_mode: GradientMode = GradientMode.SIMULTANEOUS_PERTURBATION
    learning_rate: float = 1.0
    h_target: float | None = None
    patience: int = 5
    analytic: bool = False
    backtrack_steps: int = 8
    seed: int = 0
    initial_angles: Sequence[float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gradient_mode", GradientMode(self.gradient_mode))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.trials_per_eval < 1:
            raise ValueError("trials_per_eval must be >= 1")
        if not self.window_duration > 0:
            raise ValueError("window_duration must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.target_sem > 0:
            raise ValueError("target_sem must be positive")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        schedule = tuple((float(s), int(n)) for s, n in self.step_schedule)
        if any(s <= 0 or n < 0 for s, n in schedule):
            raise ValueError("step_schedule needs positive steps and nonnegative iteration counts")
        if schedule and sum(n for _, n in schedule) == 0:
            raise ValueError("step_schedule covers zero iterations")
        object.__setattr__(self, "step_schedule", schedule)

    def steps_rad(self) -> np.ndarray:
        """Paddle step (radians) for every iteration, truncated to max_iterations."""
        schedule = self.step_schedule
        if not schedule:
            n = self.max_iterations
            schedule = ((10.0, n // 3), (5.0, n // 3), (1.0, n - 2 * (n // 3)))
        steps = np.concatenate([np.full(n, np.deg2rad(s)) for s, n in schedule])
        if len(steps) < self.max_iterations:
            steps = np.concatenate([steps, np.full(self.max_iterations - len(steps), steps[-1])])
        return steps[: self.max_iterations]


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    angles: EpcSettings
    h_a: float
    h_b: float
    h_total: float
    qber: dict[BellKind, float] | None
    trials_used: int
    wall_windows: int
    step_deg: float = field(default=0.0)


def analytic_report(config: ApparatusConfig, epc: EpcSettings) -> MetricsReport:
    """Metrics of the expected (infinite-statistics) rates."""
    return compute_metrics(expected_coincidence_rates(config, epc), singles_rates(config))


def analytic_cost(config: ApparatusConfig) -> Callable[[np.ndarray], float]:
    """Noise-free total entropy as a function of the 12-vector of paddle angles."""
    singles = singles_rates(config)

    def cost(angles: np.ndarray) -> float:
        rates = expected_coincidence_rates(config, EpcSettings.from_vector(angles))
        return compute_metrics(rates, singles).h_total

    return cost


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise mean; QBERs average over the windows where they are defined."""
    with_qber = [r for r in reports if r.qber is not None]
    qber = None
    if with_qber:
        qber = {k: float(np.mean([r.qber[k] for r in with_qber])) for k in BellKind}
    h_a = float(np.mean([r.h_a for r in reports]))
    h_b = float(np.mean([r.h_b for r in reports]))
    return MetricsReport(
        h_same=np.mean([r.h_same for r in reports], axis=0),
        h_diff=np.mean([r.h_diff for r in reports], axis=0),
        h_a=h_a,
        h_b=h_b,
        h_total=h_a + h_b,
        qber=qber,
        beta=float(np.mean([r.beta for r in with_qber])) if with_qber else None,
    )


def evaluate_cost(
    config: ApparatusConfig,
    epc: EpcSettings,
    opt: OptimizerConfig,
    seed,
    previous_h: float | None = None,
) -> tuple[MetricsReport, int]:
    """Mean metrics over ``trials`` sampled windows, or the analytic report.

    With adaptive trials the count follows the noise model at ``previous_h``
    (the last estimate of the total entropy), capped at ``opt.max_trials``.
    """
    if opt.analytic:
        return analytic_report(config, epc), 1
    trials = opt.trials_per_eval
    if opt.adaptive_trials and previous_h is not None:
        trials = required_trials(max(previous_h, 0.0), opt.target_sem, cap=opt.max_trials)
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(trials):
        rec = sample_window(config, epc, opt.window_duration, rng)
        reports.append(compute_metrics(rec.counts, rec.singles))
    if all(r.qber is None for r in reports):
        raise ValueError("no same-basis coincidences in any window (beta = 0)")
    return mean_report(reports), trials


def estimate_gradient(
    cost: Callable[[np.ndarray, int], float],
    angles: np.ndarray,
    step: float,
    mode: GradientMode,
    seed,
    h0: float | None = None,
) -> np.ndarray:
    """Forward-difference gradient of ``cost(angles, k)`` where ``k`` indexes the evaluation.

    Simultaneous perturbation shifts all angles at once by ``step`` times a
    random sign vector; coordinate mode shifts one angle at a time.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    theta = np.asarray(angles, dtype=float)
    if h0 is None:
        h0 = cost(theta, 0)
    mode = GradientMode(mode)
    if mode is GradientMode.SIMULTANEOUS_PERTURBATION:
        rng = np.random.default_rng(seed)
        delta = rng.choice((-1.0, 1.0), size=theta.size)
        return (cost(theta + step * delta, 1) - h0) / (step * delta)
    grad = np.empty(theta.size)
    for i in range(theta.size):
        shifted = theta.copy()
        shifted[i] += step
        grad[i] = (cost(shifted, i + 1) - h0) / step
    return grad


def run_alignment(
    config: ApparatusConfig,
    opt: OptimizerConfig,
    callback: Callable[[IterationLog], None] | None = None,
) -> list[IterationLog]:
    """Gradient ascent of the total coincidence entropy through the step schedule.

    Analytic mode backtracks (halving) until the entropy does not drop and
    rejects the move otherwise; sampled mode always takes the step.
    """
    theta = np.zeros(12) if opt.initial_angles is None else np.asarray(opt.initial_angles, float).copy()
    theta = np.mod(theta, 2 * np.pi)
    trace: list[IterationLog] = []
    windows = 0
    above = 0
    prev_h: float | None = None

    for it, step in enumerate(opt.steps_rad()):
        report, trials = evaluate_cost(config, EpcSettings.from_vector(theta), opt, (opt.seed, it, 0), prev_h)
        windows += trials
        prev_h = report.h_total
        entry = IterationLog(
            iteration=it,
            angles=EpcSettings.from_vector(theta),
            h_a=report.h_a,
            h_b=report.h_b,
            h_total=report.h_total,
            qber=None if report.qber is None else dict(report.qber),
            trials_used=trials,
            wall_windows=windows,
            step_deg=float(np.rad2deg(step)),
        )
        trace.append(entry)
        if callback is not None:
            callback(entry)
        log.debug("iteration %d: h_total=%.4f", it, report.h_total)

        if opt.h_target is not None:
            above = above + 1 if report.h_total >= opt.h_target else 0
            if above >= opt.patience:
                break

        spent = [0]

        def cost(angles: np.ndarray, k: int) -> float:
            r, n = evaluate_cost(config, EpcSettings.from_vector(angles), opt, (opt.seed, it, 1 + k), prev_h)
            spent[0] += n
            return r.h_total

        grad = estimate_gradient(cost, theta, step, opt.gradient_mode, (opt.seed, it, 999), h0=report.h_total)
        windows += spent[0]
        norm = np.linalg.norm(grad)
        if norm == 0 or not np.isfinite(norm):
            continue
        update = np.clip(opt.learning_rate * step * grad / norm, -2 * step, 2 * step)
        if opt.analytic:
            for b in range(opt.backtrack_steps):
                candidate = theta + update / 2**b
                if cost(candidate, -1) >= report.h_total:
                    theta = np.mod(candidate, 2 * np.pi)
                    break
        else:
            theta = np.mod(theta + update, 2 * np.pi)
    return trace


def maximize_analytic(
    config: ApparatusConfig,
    starts: Sequence[np.ndarray] = (),
    random_starts: int = 4,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Direct multi-start numerical maximization of the analytic total entropy.

    Independent of the gradient-ascent loop; used as the feasibility oracle.
    """
    from scipy.optimize import minimize

    cost = analytic_cost(config)
    rng = np.random.default_rng(seed)
    x0s = [np.asarray(s, float) for s in starts]
    x0s += [rng.uniform(0, np.pi, 12) for _ in range(random_starts)]
    best_x, best_h = None, -np.inf
    for x0 in x0s:
        res = minimize(lambda x: -cost(x), x0, method="Powell", options={"xtol": 1e-8, "ftol": 1e-12, "maxfev": 20000})
        if -res.fun > best_h:
            best_x, best_h = res.x, -res.fun
    return np.mod(best_x, 2 * np.pi), float(best_h)
