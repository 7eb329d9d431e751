"""Two-photon polarization states, Jones-matrix unitaries and Born-rule probabilities.

Conventions: single-photon kets are ordered (|H>, |V>); two-photon density
matrices are 4x4 in the ordered basis |HH>, |HV>, |VH>, |VV> with Alice's
photon as the left tensor factor.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BellKind",
    "JonesVector",
    "PolarizationUnitary",
    "TwoPhotonState",
    "KETS",
    "PAULI_X",
    "HADAMARD",
    "bell_state",
    "werner_state",
    "product_state",
    "born_coincidence_probability",
    "paddle_unitary",
    "epc_unitary",
    "epc_matrix",
    "EPC_RETARDANCES",
    "random_su2",
    "rotation_unitary",
    "check_bell_criteria",
    "coincidence_table",
]

_SQ2 = np.sqrt(2.0)


class BellKind(str, enum.Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


@dataclass(frozen=True)
class JonesVector:
    """Normalized polarization ket."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        norm = np.linalg.norm(a)
        if norm == 0:
            raise ValueError("Jones vector must be nonzero")
        a = a / norm
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)


@dataclass(frozen=True)
class PolarizationUnitary:
    """2x2 unitary Jones matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex).reshape(2, 2)
        if not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-10):
            raise ValueError("matrix is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: "PolarizationUnitary") -> "PolarizationUnitary":
        return PolarizationUnitary(self.matrix @ other.matrix)

    def dagger(self) -> "PolarizationUnitary":
        return PolarizationUnitary(self.matrix.conj().T)

    def apply(self, ket: JonesVector) -> JonesVector:
        return JonesVector(self.matrix @ ket.amplitudes)

    @classmethod
    def identity(cls) -> "PolarizationUnitary":
        return cls(np.eye(2))


@dataclass(frozen=True)
class TwoPhotonState:
    """Density matrix of a polarization photon pair."""

    rho: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        r = np.array(self.rho, dtype=complex).reshape(4, 4)
        if not np.allclose(r, r.conj().T, atol=1e-12):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r).real - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {np.trace(r).real!r} != 1")
        if np.linalg.eigvalsh(r)[0] < -1e-10:
            raise ValueError("density matrix is not positive semidefinite")
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)

    @classmethod
    def from_ket(cls, ket: np.ndarray) -> "TwoPhotonState":
        k = np.asarray(ket, dtype=complex).reshape(4)
        k = k / np.linalg.norm(k)
        return cls(np.outer(k, k.conj()))

    def evolve(self, ua: PolarizationUnitary, ub: PolarizationUnitary) -> "TwoPhotonState":
        u = np.kron(ua.matrix, ub.matrix)
        return TwoPhotonState(u @ self.rho @ u.conj().T)

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)


KETS: dict[str, JonesVector] = {
    "H": JonesVector(np.array([1, 0])),
    "V": JonesVector(np.array([0, 1])),
    "D": JonesVector(np.array([1, 1]) / _SQ2),
    "A": JonesVector(np.array([1, -1]) / _SQ2),
}

PAULI_X = PolarizationUnitary(np.array([[0, 1], [1, 0]]))
HADAMARD = PolarizationUnitary(np.array([[1, 1], [1, -1]]) / _SQ2)

_BELL_KETS = {
    BellKind.PHI_PLUS: np.array([1, 0, 0, 1]) / _SQ2,
    BellKind.PHI_MINUS: np.array([1, 0, 0, -1]) / _SQ2,
    BellKind.PSI_PLUS: np.array([0, 1, 1, 0]) / _SQ2,
    BellKind.PSI_MINUS: np.array([0, 1, -1, 0]) / _SQ2,
}


def bell_state(kind: BellKind) -> TwoPhotonState:
    return TwoPhotonState.from_ket(_BELL_KETS[BellKind(kind)])


def werner_state(kind: BellKind, visibility: float) -> TwoPhotonState:
    """Mixture ``V |Psi><Psi| + (1 - V) I/4`` of a Bell state with white noise."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility!r}")
    rho = visibility * bell_state(kind).rho + (1.0 - visibility) * np.eye(4) / 4.0
    return TwoPhotonState(rho)


def product_state(a: str, b: str) -> TwoPhotonState:
    return TwoPhotonState.from_ket(np.kron(KETS[a].amplitudes, KETS[b].amplitudes))


def born_coincidence_probability(
    state: TwoPhotonState, proj_a: JonesVector, proj_b: JonesVector
) -> float:
    """Return ``<jk| rho |jk>`` for the product projector ``|j>_A |k>_B``."""
    jk = np.kron(proj_a.amplitudes, proj_b.amplitudes)
    return float(np.real(jk.conj() @ state.rho @ jk))


def coincidence_table(state: TwoPhotonState, labels: str = "HVDA") -> np.ndarray:
    """Born probabilities for every pair of labelled projectors, indexed [Alice, Bob]."""
    out = np.empty((len(labels), len(labels)))
    for i, j in enumerate(labels):
        for k, l in enumerate(labels):
            out[i, k] = born_coincidence_probability(state, KETS[j], KETS[l])
    return out


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _paddle_matrix(angle: float, retardance: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    e = np.exp(-0.5j * retardance)
    # R(angle) diag(e, e*) R(-angle), expanded
    d, o = c * c * e + s * s * e.conjugate(), c * s * (e - e.conjugate())
    return np.array([[d, o], [o, c * c * e.conjugate() + s * s * e]])


def paddle_unitary(angle: float, retardance: float) -> PolarizationUnitary:
    """Linear retarder with fast axis at ``angle`` and phase delay ``retardance`` (radians)."""
    r = _rotation(angle)
    d = np.diag([np.exp(-0.5j * retardance), np.exp(0.5j * retardance)])
    return PolarizationUnitary(r @ d @ r.T)


# quarter / half / quarter paddle stack
EPC_RETARDANCES = (np.pi / 2, np.pi, np.pi / 2)


def epc_matrix(angles: Sequence[float], retardances: Sequence[float] = EPC_RETARDANCES) -> np.ndarray:
    """Unchecked 2x2 matrix of a three-paddle controller (fast path for cost evaluation)."""
    if len(angles) != 3 or len(retardances) != 3:
        raise ValueError(
            f"expected 3 angles and 3 retardances, got {len(angles)} and {len(retardances)}"
        )
    m = _paddle_matrix(angles[0], retardances[0])
    m = _paddle_matrix(angles[1], retardances[1]) @ m
    return _paddle_matrix(angles[2], retardances[2]) @ m


def epc_unitary(
    angles: Sequence[float], retardances: Sequence[float] = EPC_RETARDANCES
) -> PolarizationUnitary:
    """Three-paddle controller; light passes paddle 1 first, so the product is U3 U2 U1."""
    return PolarizationUnitary(epc_matrix(angles, retardances))


def random_su2(seed: int | np.random.Generator) -> PolarizationUnitary:
    """Haar-random SU(2) element built from a normalized complex Gaussian pair."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.normal(size=2) + 1j * rng.normal(size=2)
    a, b = z / np.linalg.norm(z)
    return PolarizationUnitary(np.array([[a, -b.conjugate()], [b, a.conjugate()]]))


def rotation_unitary(axis: Sequence[float], angle: float) -> PolarizationUnitary:
    """``exp(-i angle/2 n.sigma)`` for a Stokes-space axis ``n`` (S1=H/V, S2=D/A, S3=R/L)."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    # Stokes S1, S2, S3 map onto Pauli Z, X, Y in the (H, V) basis
    sigma = (
        n[0] * np.array([[1, 0], [0, -1]])
        + n[1] * np.array([[0, 1], [1, 0]])
        + n[2] * np.array([[0, -1j], [1j, 0]])
    )
    return PolarizationUnitary(
        np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sigma
    )


def check_bell_criteria(state: TwoPhotonState, tol: float = 1e-9) -> tuple[bool, bool]:
    """Test the correlation and Hadamard-unbiasedness conditions over j, k in {H, V}.

    The first flag holds when ``<jk|rho|jk>`` equals ``|<j|k>|^2 / 2`` for every
    j, k, or equals ``|<j|X|k>|^2 / 2`` for every j, k. The second flag holds when
    both ``(H x I)`` and ``(I x H)`` rotated states give 1/4 on every ``|jk>``.
    """
    hv = "HV"
    probs = np.array(
        [[born_coincidence_probability(state, KETS[j], KETS[k]) for k in hv] for j in hv]
    )
    same = 0.5 * np.eye(2)
    flipped = 0.5 * np.abs(PAULI_X.matrix) ** 2
    first = bool(np.all(np.abs(probs - same) <= tol) or np.all(np.abs(probs - flipped) <= tol))

    ident = PolarizationUnitary.identity()
    second = True
    for rotated in (state.evolve(HADAMARD, ident), state.evolve(ident, HADAMARD)):
        for j in hv:
            for k in hv:
                if abs(born_coincidence_probability(rotated, KETS[j], KETS[k]) - 0.25) > tol:
                    second = False
    return first, second
