"""Effective time-dependent observables and two-kaon correlations.

A question "are you ``|k>`` at time ``t``?" on a decaying kaon is a Yes/No
measurement whose Heisenberg-picture observable is the 2x2 operator

    O = lambda |chi><chi| - |chi_perp><chi_perp|

with ``lambda = 2 P(Yes | chi) - 1``. The main path builds ``O`` from closed
forms and takes traces; the ``oracle_*`` functions recompute the same numbers
from propagated amplitudes and Yes/No probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from kaonbell.physics import (
    K0,
    K0BAR,
    Measurement,
    PhysicalConstants,
    Quasispin,
    check_picture,
    evolution_operator,
    mass_eigenstates,
    propagator,
    survival_norm,
)

__all__ = [
    "PAULI",
    "EffectiveObservable",
    "JointProbs",
    "TwoQubitState",
    "bloch_vector",
    "chi_state",
    "correlation",
    "effective_observable",
    "lambda_eigenvalue",
    "oracle_correlation",
    "oracle_joint_probs",
    "orthogonal_complement",
    "psi_minus",
    "psi_minus_vector",
]

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
HERMITIAN_ATOL = 1e-12


def _is_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.allclose(m, m.conj().T, rtol=0.0, atol=atol))


def orthogonal_complement(chi: np.ndarray) -> np.ndarray:
    """``(a, b) -> (-conj(b), conj(a))``."""
    return np.array([-np.conj(chi[1]), np.conj(chi[0])], dtype=complex)


def bloch_vector(chi: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("i,kij,j->k", chi.conj(), PAULI, chi))


def _bracket(q: Quasispin, t: float, c: PhysicalConstants) -> np.ndarray:
    k_s, k_l = mass_eigenstates(c)
    k = q.vector
    return np.array(
        [
            np.vdot(k_s, k) * np.exp(-0.5 * c.gamma_s * t),
            np.vdot(k_l, k) * np.exp((1j * c.delta_m - 0.5 * c.gamma_l) * t),
        ]
    )


def _exact_yes_vector(q: Quasispin, t: float, c: PhysicalConstants) -> np.ndarray:
    return evolution_operator(t, c).conj().T @ q.vector


def chi_state(
    q: Quasispin, t: float, c: PhysicalConstants, picture: str = "effective"
) -> np.ndarray:
    """Unit eigenvector of the effective observable belonging to ``lambda``.

    Raises ``ValueError`` when the surviving norm underflows; scan ranges
    should then be capped.
    """
    check_picture(picture)
    if not t >= 0:
        raise ValueError(f"time must be >= 0, got {t}")
    if picture == "exact":
        v = _exact_yes_vector(q, t, c)
        norm2 = float(np.vdot(v, v).real)
    else:
        v = _bracket(q, t, c)
        norm2 = survival_norm(q, t, c)
    if not norm2 > 0 or not math.isfinite(norm2):
        raise ValueError(f"surviving norm underflows at t={t}; cap the time range")
    return v / math.sqrt(norm2)


def lambda_eigenvalue(q: Quasispin, t: float, c: PhysicalConstants) -> float:
    """Closed-form first eigenvalue in terms of theta, phi, t and delta.

    Equals ``2 N(t) - 1`` when delta = 0; at finite delta the two differ at
    first order (see ``effective_observable``).
    """
    if not t >= 0:
        raise ValueError(f"time must be >= 0, got {t}")
    d = c.delta
    e_s = math.exp(-c.gamma_s * t)
    e_l = math.exp(-c.gamma_l * t)
    return (
        -1.0
        + (e_s - e_l) * (1.0 - d * d) * math.cos(q.theta)
        + (e_s + e_l) * (1.0 + d * d + 2.0 * d * math.cos(q.phi) * math.sin(q.theta))
    )


@dataclass(frozen=True)
class EffectiveObservable:
    chi: np.ndarray
    lam: float
    matrix: np.ndarray

    @property
    def chi_perp(self) -> np.ndarray:
        return orthogonal_complement(self.chi)

    @property
    def yes_projector(self) -> np.ndarray:
        """``(O + 1)/2``, the operator whose expectation is P(Yes)."""
        return 0.5 * (self.matrix + np.eye(2))

    def bloch(self) -> tuple[float, np.ndarray]:
        """``(alpha, v)`` with ``O = alpha*1 + v.sigma``."""
        alpha = 0.5 * float(np.trace(self.matrix).real)
        vec = 0.5 * np.real(np.einsum("kij,ji->k", PAULI, self.matrix))
        return alpha, vec


def effective_observable(
    m: Measurement, c: PhysicalConstants, picture: str = "effective"
) -> EffectiveObservable:
    """Assemble ``O = lambda|chi><chi| - |chi_perp><chi_perp|`` for a measurement.

    ``picture="effective"`` takes ``lambda = 2 N(t) - 1``, the value implied by
    the surviving norm ``N``; ``"printed"`` uses :func:`lambda_eigenvalue`
    verbatim; ``"exact"`` uses ``lambda = 2 |U(t)^dag k|^2 - 1``.
    """
    check_picture(picture)
    q, t = m.quasispin, m.time
    chi = chi_state(q, t, c, picture)
    if picture == "effective":
        lam = 2.0 * survival_norm(q, t, c) - 1.0
    elif picture == "printed":
        lam = lambda_eigenvalue(q, t, c)
    else:
        v = _exact_yes_vector(q, t, c)
        lam = 2.0 * float(np.vdot(v, v).real) - 1.0

    perp = orthogonal_complement(chi)
    matrix = lam * np.outer(chi, chi.conj()) - np.outer(perp, perp.conj())

    # Same operator written as white noise plus a shortened spin direction.
    n = bloch_vector(chi)
    alt = 0.5 * (lam - 1.0) * np.eye(2) + 0.5 * (lam + 1.0) * np.einsum("k,kij->ij", n, PAULI)
    if not np.allclose(matrix, alt, rtol=0.0, atol=1e-12):
        raise ArithmeticError("observable decompositions disagree")
    return EffectiveObservable(chi=chi, lam=lam, matrix=matrix)


@dataclass(frozen=True)
class TwoQubitState:
    """Density matrix on the two-kaon space, ordered (K1K1, K1K2, K2K1, K2K2)."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"rho must be 4x4, got shape {rho.shape}")
        if not _is_hermitian(rho):
            raise ValueError("rho is not Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-12:
            raise ValueError(f"trace(rho) = {np.trace(rho).real}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("rho is not positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_vector(cls, psi: np.ndarray) -> "TwoQubitState":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls) -> "TwoQubitState":
        return cls(np.eye(4, dtype=complex) / 4.0)


def psi_minus_vector() -> np.ndarray:
    """``(|K0 K0bar> - |K0bar K0>)/sqrt(2)``."""
    a, b = K0.vector, K0BAR.vector
    return (np.kron(a, b) - np.kron(b, a)) / math.sqrt(2.0)


def psi_minus() -> TwoQubitState:
    return TwoQubitState.from_vector(psi_minus_vector())


def correlation(
    ma: Measurement,
    mb: Measurement,
    rho: TwoQubitState,
    c: PhysicalConstants,
    picture: str = "effective",
) -> float:
    """``Tr[(O_a x O_b) rho]``."""
    oa = effective_observable(ma, c, picture).matrix
    ob = effective_observable(mb, c, picture).matrix
    value = np.trace(np.kron(oa, ob) @ rho.rho)
    if abs(value.imag) > 1e-12:
        raise ArithmeticError(f"correlation has imaginary part {value.imag}")
    return float(value.real)


@dataclass(frozen=True)
class JointProbs:
    p_yy: float
    p_yn: float
    p_ny: float
    p_nn: float

    def as_array(self) -> np.ndarray:
        """Cells ordered YY, YN, NY, NN."""
        return np.array([self.p_yy, self.p_yn, self.p_ny, self.p_nn])

    @property
    def p_yes_a(self) -> float:
        return self.p_yy + self.p_yn

    @property
    def p_yes_b(self) -> float:
        return self.p_yy + self.p_ny

    def check(self, atol: float = 1e-12) -> None:
        p = self.as_array()
        if abs(p.sum() - 1.0) > atol:
            raise ValueError(f"joint probabilities sum to {p.sum()}")
        if p.min() < -atol or p.max() > 1.0 + atol:
            raise ValueError(f"joint probabilities outside [0, 1]: {p}")


def _yes_amplitude_row(m: Measurement, c: PhysicalConstants, picture: str) -> np.ndarray:
    # <k| P(t): contracts a state-space index into the Yes amplitude.
    return m.quasispin.vector.conj() @ propagator(m.time, c, picture)


def oracle_joint_probs(
    ma: Measurement,
    mb: Measurement,
    psi: np.ndarray,
    c: PhysicalConstants,
    picture: str = "effective",
) -> JointProbs:
    """Yes/No joint distribution from propagated amplitudes of a pure two-kaon state.

    "No" covers both the orthogonal answer and a kaon that already decayed.
    """
    check_picture(picture)
    if picture == "printed":
        raise ValueError("the printed-lambda picture has no amplitude model")
    psi = np.asarray(psi, dtype=complex).reshape(4)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError(f"psi must be normalized, |psi| = {np.linalg.norm(psi)}")
    amp = psi.reshape(2, 2)
    ya = _yes_amplitude_row(ma, c, picture)
    yb = _yes_amplitude_row(mb, c, picture)
    p_yy = abs(ya @ amp @ yb) ** 2
    p_a = float(np.sum(np.abs(ya @ amp) ** 2))
    p_b = float(np.sum(np.abs(amp @ yb) ** 2))
    return JointProbs(
        p_yy=float(p_yy),
        p_yn=p_a - p_yy,
        p_ny=p_b - p_yy,
        p_nn=1.0 - p_a - p_b + p_yy,
    )


def oracle_correlation(
    ma: Measurement,
    mb: Measurement,
    psi: np.ndarray,
    c: PhysicalConstants,
    picture: str = "effective",
) -> float:
    p = oracle_joint_probs(ma, mb, psi, c, picture)
    return p.p_yy + p.p_nn - p.p_yn - p.p_ny
