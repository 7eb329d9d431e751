"""Model of the all-fiber BBM92 receiver pair.

Each side has a transmission fiber (``pre_split_unitary``) feeding a 50:50-ish
beam splitter. Each of the four output arms carries its own fiber
birefringence and a three-paddle EPC before a PBS with two detectors. The PBS
always projects onto the local H/V axes, so the X arms only measure D/A once
their EPC maps D/A onto H/V.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .quantum import (
    HADAMARD,
    BellKind,
    PolarizationUnitary,
    TwoPhotonState,
    epc_matrix,
    epc_unitary,
    rotation_unitary,
    werner_state,
)

__all__ = [
    "ArmId",
    "ARMS",
    "LABELS",
    "SINGLES_CHANNELS",
    "SpectralModel",
    "ApparatusConfig",
    "EpcSettings",
    "CoincidenceRecord",
    "arm_unitary",
    "effective_measurement_state",
    "spectral_average",
    "expected_coincidence_rates",
    "singles_rates",
    "sample_window",
    "aligned_settings",
    "solve_epc_angles",
]

LABELS = "HVDA"
SINGLES_CHANNELS = ("A_H", "A_V", "A_D", "A_A", "B_H", "B_V", "B_D", "B_A")


class ArmId(str, enum.Enum):
    ALICE_Z = "alice_z"
    ALICE_X = "alice_x"
    BOB_Z = "bob_z"
    BOB_X = "bob_x"

    @property
    def side(self) -> int:
        """0 for Alice, 1 for Bob."""
        return 0 if self.value.startswith("alice") else 1

    @property
    def is_z(self) -> bool:
        return self.value.endswith("_z")


ARMS: tuple[ArmId, ...] = tuple(ArmId)


def _arm(side: int, z: bool) -> ArmId:
    return ARMS[2 * side + (0 if z else 1)]


def _per_arm(value, default) -> tuple:
    if value is None:
        return tuple(default for _ in ARMS)
    if isinstance(value, Mapping):
        return tuple(value.get(a, value.get(a.value, default)) for a in ARMS)
    value = tuple(value)
    if len(value) != 4:
        raise ValueError(f"expected one entry per arm (4), got {len(value)}")
    return value


@dataclass(frozen=True)
class SpectralModel:
    """Top-hat spectrum with a linear retardance gradient in every arm fiber.

    The residual retardance ``gradient * (wavelength - center)`` acts about a
    fixed Stokes axis per arm (default S1, a linear H/V retarder), applied
    after the static arm fiber.
    """

    bandwidth_nm: float = 60.0
    center_nm: float = 1310.0
    gradient_rad_per_nm: Sequence[float] = (0.0, 0.0, 0.0, 0.0)
    quadrature_points: int = 5
    axes: Sequence[Sequence[float]] = ((1.0, 0.0, 0.0),) * 4

    def __post_init__(self) -> None:
        if self.quadrature_points < 1:
            raise ValueError("quadrature_points must be >= 1")
        if self.bandwidth_nm < 0:
            raise ValueError("bandwidth_nm must be >= 0")
        object.__setattr__(
            self, "gradient_rad_per_nm", tuple(float(g) for g in _per_arm(self.gradient_rad_per_nm, 0.0))
        )
        axes = _per_arm(self.axes, (1.0, 0.0, 0.0))
        object.__setattr__(self, "axes", tuple(tuple(float(c) for c in ax) for ax in axes))

    def offsets_nm(self) -> np.ndarray:
        """Midpoints of equal sub-bands, symmetric about the center wavelength."""
        n = self.quadrature_points
        return self.bandwidth_nm * ((np.arange(n) + 0.5) / n - 0.5)


@dataclass(frozen=True)
class ApparatusConfig:
    source: BellKind
    visibility: float
    pair_rate: float
    singles_rate_base: Sequence[float]
    fiber_unitary: Sequence[PolarizationUnitary] | None = None
    pre_split_unitary: Sequence[PolarizationUnitary] | None = None
    bs_ratio: Sequence[float] = (0.5, 0.5)
    detector_efficiency: Sequence[float] = (1.0,) * 8
    dark_coincidence_rate: float = 0.0
    spectral: SpectralModel | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", BellKind(self.source))
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility!r}")
        if self.pair_rate < 0:
            raise ValueError("pair_rate must be >= 0")
        if self.dark_coincidence_rate < 0:
            raise ValueError("dark_coincidence_rate must be >= 0")
        base = tuple(float(x) for x in self.singles_rate_base)
        if len(base) != 2 or min(base) < 0:
            raise ValueError("singles_rate_base needs two nonnegative rates (Alice, Bob)")
        object.__setattr__(self, "singles_rate_base", base)
        ratio = tuple(float(x) for x in self.bs_ratio)
        if len(ratio) != 2 or not all(0.0 < r < 1.0 for r in ratio):
            raise ValueError("bs_ratio needs two values in (0, 1)")
        object.__setattr__(self, "bs_ratio", ratio)
        eff = tuple(float(x) for x in self.detector_efficiency)
        if len(eff) != 8 or not all(0.0 < e <= 1.0 for e in eff):
            raise ValueError("detector_efficiency needs eight values in (0, 1]")
        object.__setattr__(self, "detector_efficiency", eff)
        ident = PolarizationUnitary.identity()
        object.__setattr__(self, "fiber_unitary", _per_arm(self.fiber_unitary, ident))
        pre = (ident, ident) if self.pre_split_unitary is None else tuple(self.pre_split_unitary)
        if len(pre) != 2:
            raise ValueError("pre_split_unitary needs two entries (Alice, Bob)")
        object.__setattr__(self, "pre_split_unitary", pre)

    @cached_property
    def source_state(self) -> TwoPhotonState:
        return werner_state(self.source, self.visibility)

    @cached_property
    def _split(self) -> np.ndarray:
        # [side, label] probability of routing into the arm that measures label
        r = np.asarray(self.bs_ratio)
        return np.stack([r, r, 1 - r, 1 - r], axis=1)

    @cached_property
    def _eta(self) -> np.ndarray:
        return np.asarray(self.detector_efficiency).reshape(2, 4)


@dataclass(frozen=True)
class EpcSettings:
    """Paddle angles in radians, one row of three per arm, stored modulo 2*pi."""

    angles: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))

    def __post_init__(self) -> None:
        a = np.mod(np.array(self.angles, dtype=float).reshape(4, 3), 2 * np.pi)
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "EpcSettings":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 12:
            raise ValueError(f"expected 12 paddle angles, got {vec.size}")
        return cls(vec.reshape(4, 3))

    @property
    def vector(self) -> np.ndarray:
        return self.angles.reshape(12).copy()

    def unitary(self, arm: ArmId) -> PolarizationUnitary:
        return epc_unitary(self.angles[ARMS.index(ArmId(arm))])


@dataclass(frozen=True)
class CoincidenceRecord:
    """One measurement window: 16 coincidence counts ``counts[j, k]`` (Alice j, Bob k, order HVDA) and 8 singles."""

    counts: np.ndarray
    singles: np.ndarray
    duration: float

    def __post_init__(self) -> None:
        c = np.array(self.counts).reshape(4, 4)
        s = np.array(self.singles).reshape(8)
        if (c < 0).any() or (s < 0).any():
            raise ValueError("counts must be nonnegative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "singles", s)


def _arm_matrix(config: ApparatusConfig, epc: EpcSettings, index: int, offset_nm: float = 0.0) -> np.ndarray:
    fiber = config.fiber_unitary[index].matrix
    if config.spectral is not None and offset_nm != 0.0:
        g = config.spectral.gradient_rad_per_nm[index]
        if g != 0.0:
            fiber = rotation_unitary(config.spectral.axes[index], g * offset_nm).matrix @ fiber
    pre = config.pre_split_unitary[ARMS[index].side].matrix
    return epc_matrix(epc.angles[index]) @ fiber @ pre


def arm_unitary(
    config: ApparatusConfig, epc: EpcSettings, arm: ArmId, offset_nm: float = 0.0
) -> PolarizationUnitary:
    """EPC after arm fiber after the side's transmission fiber."""
    return PolarizationUnitary(_arm_matrix(config, epc, ARMS.index(ArmId(arm)), offset_nm))


def _check_pair(arm_a: ArmId, arm_b: ArmId) -> tuple[ArmId, ArmId]:
    arm_a, arm_b = ArmId(arm_a), ArmId(arm_b)
    if arm_a.side != 0 or arm_b.side != 1:
        raise ValueError(f"need an Alice arm and a Bob arm, got {arm_a.value}, {arm_b.value}")
    return arm_a, arm_b


def _evolved_rho(rho: np.ndarray, ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
    u = np.kron(ua, ub)
    return u @ rho @ u.conj().T


def effective_measurement_state(
    config: ApparatusConfig, epc: EpcSettings, arm_a: ArmId, arm_b: ArmId
) -> TwoPhotonState:
    """State in front of the two chosen PBSs at the center wavelength."""
    arm_a, arm_b = _check_pair(arm_a, arm_b)
    ua = arm_unitary(config, epc, arm_a)
    ub = arm_unitary(config, epc, arm_b)
    return config.source_state.evolve(ua, ub)


def spectral_average(
    config: ApparatusConfig, epc: EpcSettings, arm_a: ArmId, arm_b: ArmId
) -> TwoPhotonState:
    """Uniform-weight quadrature average of the effective state over the source band."""
    if config.spectral is None:
        raise ValueError("apparatus has no spectral model")
    arm_a, arm_b = _check_pair(arm_a, arm_b)
    return TwoPhotonState(_averaged_rho(config, epc, arm_a, arm_b))


def _averaged_rho(config: ApparatusConfig, epc: EpcSettings, arm_a: ArmId, arm_b: ArmId) -> np.ndarray:
    rho0 = config.source_state.rho
    offsets = config.spectral.offsets_nm() if config.spectral is not None else np.zeros(1)
    acc = np.zeros((4, 4), dtype=complex)
    for off in offsets:
        ua = _arm_matrix(config, epc, ARMS.index(arm_a), off)
        ub = _arm_matrix(config, epc, ARMS.index(arm_b), off)
        acc += _evolved_rho(rho0, ua, ub)
    return acc / len(offsets)


def born_table(config: ApparatusConfig, epc: EpcSettings) -> np.ndarray:
    """Local-frame projection probabilities for all 16 labelled detector pairs."""
    rho0 = config.source_state.rho
    offsets = config.spectral.offsets_nm() if config.spectral is not None else np.zeros(1)
    out = np.zeros((4, 4))
    for off in offsets:
        u = [_arm_matrix(config, epc, i, off) for i in range(4)]
        for za in (True, False):
            for zb in (True, False):
                ua = u[0] if za else u[1]
                ub = u[2] if zb else u[3]
                w = np.kron(ua, ub)
                block = np.einsum("ij,jk,ik->i", w, rho0, w.conj()).real.reshape(2, 2)
                out[0 if za else 2 : 2 if za else 4, 0 if zb else 2 : 2 if zb else 4] += block
    # roundoff can leave a vanishing probability at -1e-17
    return np.clip(out / len(offsets), 0.0, None)


def expected_coincidence_rates(config: ApparatusConfig, epc: EpcSettings) -> np.ndarray:
    """Mean coincidence rates (1/s), indexed ``[Alice label, Bob label]`` in HVDA order."""
    born = born_table(config, epc)
    weight_a = config._split[0] * config._eta[0]
    weight_b = config._split[1] * config._eta[1]
    return config.pair_rate * np.outer(weight_a, weight_b) * born + config.dark_coincidence_rate


def singles_rates(config: ApparatusConfig) -> np.ndarray:
    """Singles rates (1/s) in A_H..A_A, B_H..B_A order; independent of EPC settings."""
    base = np.asarray(config.singles_rate_base)[:, None]
    return (base * config._split * config._eta).reshape(8)


def sample_window(
    config: ApparatusConfig,
    epc: EpcSettings,
    duration: float,
    seed: int | Sequence[int] | np.random.Generator,
) -> CoincidenceRecord:
    """Poisson-sample one measurement window of ``duration`` seconds."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = rng.poisson(expected_coincidence_rates(config, epc) * duration)
    singles = rng.poisson(singles_rates(config) * duration)
    return CoincidenceRecord(counts=counts, singles=singles, duration=duration)


def solve_epc_angles(target: PolarizationUnitary, starts: int = 8) -> np.ndarray:
    """Find paddle angles whose EPC equals ``target`` up to a global phase."""
    from scipy.optimize import least_squares

    t = target.matrix

    def residual(x):
        u = epc_matrix(x)
        overlap = np.trace(t.conj().T @ u)
        phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
        d = u - phase * t
        return np.concatenate([d.real.ravel(), d.imag.ravel()])

    rng = np.random.default_rng(0)
    best = None
    for i in range(starts):
        x0 = np.zeros(3) if i == 0 else rng.uniform(0, np.pi, 3)
        res = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or res.cost < best.cost:
            best = res
        if best.cost < 1e-24:
            break
    return np.mod(best.x, 2 * np.pi)


def aligned_settings(config: ApparatusConfig) -> EpcSettings:
    """EPC angles undoing each arm's birefringence at the center wavelength.

    Z arms are mapped to the identity and X arms to the Hadamard, so every
    PBS measures its nominal basis and the source's own Bell correlations appear.
    """
    angles = np.zeros((4, 3))
    for i, arm in enumerate(ARMS):
        chain = config.fiber_unitary[i] @ config.pre_split_unitary[arm.side]
        target = chain.dagger() if arm.is_z else HADAMARD @ chain.dagger()
        angles[i] = solve_epc_angles(target)
    return EpcSettings(angles)
