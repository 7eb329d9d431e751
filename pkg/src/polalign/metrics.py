"""Coincidence entropies, per-Bell-state QBERs and the trial-count rule.

Count matrices are indexed ``[Alice label, Bob label]`` in H, V, D, A order.
Every function here also accepts real-valued "counts" (expected rates), which
is how the noise-free analytic cost is evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .optics import CoincidenceRecord
from .quantum import BellKind

__all__ = [
    "binary_entropy",
    "DetectorWeights",
    "detector_weights",
    "CoincidenceProbabilities",
    "weighted_probabilities",
    "MetricsReport",
    "coincidence_entropies",
    "qber_all",
    "compute_metrics",
    "metrics_from_record",
    "sigma_model",
    "required_trials",
    "SIGMA_SLOPE",
    "SIGMA_INTERCEPT",
]

SIMPLEX_TOL = 1e-9
SIGMA_SLOPE = 0.01
SIGMA_INTERCEPT = 0.06

PARTNER = (1, 0, 3, 2)
OTHER_BASIS = ((2, 3), (2, 3), (0, 1), (0, 1))

# numerator channels (Alice, Bob) of each QBER; the eight same-basis channels form beta
_ERRORS = {
    BellKind.PHI_PLUS: ((0, 1), (1, 0), (2, 3), (3, 2)),
    BellKind.PHI_MINUS: ((0, 1), (1, 0), (2, 2), (3, 3)),
    BellKind.PSI_PLUS: ((0, 0), (1, 1), (2, 3), (3, 2)),
    BellKind.PSI_MINUS: ((0, 0), (1, 1), (2, 2), (3, 3)),
}
_SAME_BASIS = ((0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3))


def binary_entropy(p1: float, p2: float) -> float:
    """Shannon entropy in bits of the two-outcome distribution (p1, p2), with 0 log 0 = 0."""
    if p1 < -SIMPLEX_TOL or p2 < -SIMPLEX_TOL or abs(p1 + p2 - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"({p1!r}, {p2!r}) is not a probability pair")
    h = 0.0
    for p in (p1, p2):
        p = min(max(p, 0.0), 1.0)
        if p > 0.0:
            h -= p * math.log2(p)
    return min(max(h, 0.0), 1.0)


@dataclass(frozen=True)
class DetectorWeights:
    w_a: np.ndarray
    w_b: np.ndarray


def detector_weights(singles) -> DetectorWeights:
    """Per-detector weights ``(r_j + r_k) / r_j`` for basis partners j, k.

    ``singles`` holds the eight singles counts (or rates) in
    A_H, A_V, A_D, A_A, B_H, B_V, B_D, B_A order.
    """
    r = np.asarray(singles, dtype=float).reshape(2, 4)
    if (r <= 0).any():
        raise ValueError("detector weights need every singles channel to be positive")
    w = (r + r[:, PARTNER]) / r
    return DetectorWeights(w_a=w[0], w_b=w[1])


@dataclass(frozen=True)
class CoincidenceProbabilities:
    """Normalized same-basis and cross-basis pairs, indexed ``[side, j, 0|1]``.

    Side 0 conditions on Alice's outcome j, side 1 on Bob's. A pair whose
    normalizer vanished is marked invalid and holds NaNs.
    """

    same: np.ndarray
    diff: np.ndarray
    same_valid: np.ndarray
    diff_valid: np.ndarray


def _normalize(a: float, b: float) -> tuple[float, float, bool]:
    n = a + b
    if n <= 0:
        return math.nan, math.nan, False
    return a / n, b / n, True


def weighted_probabilities(counts, weights: DetectorWeights | None = None) -> CoincidenceProbabilities:
    if isinstance(counts, CoincidenceRecord):
        counts = counts.counts
    c = np.asarray(counts, dtype=float).reshape(4, 4)
    if weights is not None:
        c = np.outer(weights.w_a, weights.w_b) * c
    same = np.empty((2, 4, 2))
    diff = np.empty((2, 4, 2))
    same_ok = np.zeros((2, 4), dtype=bool)
    diff_ok = np.zeros((2, 4), dtype=bool)
    # Bob's view swaps the roles of the two indices
    for side, view in enumerate((c, c.T)):
        for j in range(4):
            p1, p2, same_ok[side, j] = _normalize(view[j, j], view[j, PARTNER[j]])
            same[side, j] = p1, p2
            l, m = OTHER_BASIS[j]
            p1, p2, diff_ok[side, j] = _normalize(view[j, l], view[j, m])
            diff[side, j] = p1, p2
    return CoincidenceProbabilities(same, diff, same_ok, diff_ok)


@dataclass(frozen=True)
class MetricsReport:
    """Entropy terms per side and label, their sums, and the four QBERs.

    ``qber`` and ``beta`` are None when no same-basis coincidences were seen
    (or when only the entropy part was computed).
    """

    h_same: np.ndarray
    h_diff: np.ndarray
    h_a: float
    h_b: float
    h_total: float
    qber: Mapping[BellKind, float] | None = None
    beta: float | None = None

    def qber_min(self) -> float | None:
        return None if self.qber is None else min(self.qber.values())


def coincidence_entropies(probs: CoincidenceProbabilities) -> MetricsReport:
    h_same = np.zeros((2, 4))
    h_diff = np.zeros((2, 4))
    for side in range(2):
        for j in range(4):
            if probs.same_valid[side, j]:
                h_same[side, j] = 1.0 - binary_entropy(*probs.same[side, j])
            if probs.diff_valid[side, j]:
                h_diff[side, j] = binary_entropy(*probs.diff[side, j])
    h_a = float(h_same[0].sum() + h_diff[0].sum())
    h_b = float(h_same[1].sum() + h_diff[1].sum())
    return MetricsReport(h_same=h_same, h_diff=h_diff, h_a=h_a, h_b=h_b, h_total=h_a + h_b)


def qber_all(counts) -> dict[BellKind, float]:
    """QBER of each Bell state from raw same-basis counts."""
    if isinstance(counts, CoincidenceRecord):
        counts = counts.counts
    c = np.asarray(counts, dtype=float).reshape(4, 4)
    beta = sum(c[i, k] for i, k in _SAME_BASIS)
    if not beta > 0:
        raise ValueError("QBER undefined: no same-basis coincidences (beta = 0)")
    return {kind: float(sum(c[i, k] for i, k in chans) / beta) for kind, chans in _ERRORS.items()}


def compute_metrics(counts, singles) -> MetricsReport:
    """Full pipeline: weights from singles, weighted entropies, raw-count QBERs."""
    c = np.asarray(counts).reshape(4, 4)
    report = coincidence_entropies(weighted_probabilities(c, detector_weights(singles)))
    beta = float(sum(c[i, k] for i, k in _SAME_BASIS))
    qber = qber_all(c) if beta > 0 else None
    return MetricsReport(
        h_same=report.h_same,
        h_diff=report.h_diff,
        h_a=report.h_a,
        h_b=report.h_b,
        h_total=report.h_total,
        qber=qber,
        beta=beta if beta > 0 else None,
    )


def metrics_from_record(record: CoincidenceRecord) -> MetricsReport:
    return compute_metrics(record.counts, record.singles)


def sigma_model(h_total: float, slope: float = SIGMA_SLOPE, intercept: float = SIGMA_INTERCEPT) -> float:
    """Linear noise model for the spread of the total entropy between windows."""
    if h_total < 0:
        raise ValueError("h_total must be >= 0")
    return slope * h_total + intercept


def required_trials(
    h_total: float,
    sem: float,
    slope: float = SIGMA_SLOPE,
    intercept: float = SIGMA_INTERCEPT,
    sem_exponent: float = 1.0,
    cap: int | None = None,
) -> int:
    """Trials per evaluation, ``floor(sigma^2 / sem**sem_exponent)`` clamped to [1, cap].

    The default exponent 1 divides the variance by the SEM itself, as the
    fitted rule does; pass ``sem_exponent=2`` for the textbook ``(sigma/SEM)^2``.
    """
    if not sem > 0:
        raise ValueError("sem must be positive")
    sigma = sigma_model(h_total, slope, intercept)
    ratio = sigma**2 / sem**sem_exponent
    # ratios like 0.0484 / 1e-4 land a hair below the integer they represent
    m = max(1, math.floor(ratio * (1 + 1e-12)))
    if cap is not None:
        m = min(m, cap)
    return m
