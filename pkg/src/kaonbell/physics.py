"""Neutral-kaon constants, quasispin states and single-kaon time evolution.

Everything is expressed in the orthonormal CP basis ``{|K1>, |K2>}`` and all
times are dimensionless multiples of the K_S lifetime.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

__all__ = [
    "PICTURES",
    "K0",
    "K0BAR",
    "K1",
    "K2",
    "Measurement",
    "PhysicalConstants",
    "Quasispin",
    "check_picture",
    "evolution_operator",
    "load_constants",
    "mass_eigenstates",
    "propagator",
    "survival_norm",
]

# PDG inputs, converted to units of tau_S (hbar = 1).
TAU_S = 0.8954e-10
TAU_L = 5.116e-8
DELTA_M_PER_SECOND = 0.5289e10
DEFAULT_GAMMA_L = TAU_S / TAU_L
DEFAULT_DELTA_M = DELTA_M_PER_SECOND * TAU_S
DEFAULT_EPS = complex(1.66e-3, 0.0)

#: "effective": kets |K1>,|K2> in the observables stand for K_S/K_L coordinates.
#: "exact": full non-orthogonal evolution V diag(...) V^-1 acting on CP-basis states.
#: "printed": effective coordinates with the closed-form lambda taken verbatim.
PICTURES = ("effective", "exact", "printed")


def check_picture(picture: str) -> str:
    if picture not in PICTURES:
        raise ValueError(f"unknown picture {picture!r}; expected one of {PICTURES}")
    return picture


@dataclass(frozen=True)
class PhysicalConstants:
    """Decay widths, mass splitting and CP violation of the kaon system.

    ``delta`` is derived from ``eps`` and cannot be passed in.
    """

    gamma_s: float = 1.0
    gamma_l: float = DEFAULT_GAMMA_L
    delta_m: float = DEFAULT_DELTA_M
    eps: complex = DEFAULT_EPS
    delta: float = field(init=False)

    def __post_init__(self) -> None:
        eps = complex(self.eps)
        object.__setattr__(self, "eps", eps)
        for name in ("gamma_s", "gamma_l", "delta_m"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not math.isfinite(eps.real) or not math.isfinite(eps.imag):
            raise ValueError(f"eps must be finite, got {eps}")
        if not self.gamma_s > self.gamma_l > 0:
            raise ValueError(
                f"need gamma_s > gamma_l > 0, got gamma_s={self.gamma_s}, gamma_l={self.gamma_l}"
            )
        delta = 2.0 * eps.real / (1.0 + abs(eps) ** 2)
        if abs(delta) >= 1:
            raise ValueError(f"|delta| must be < 1, got {delta}")
        object.__setattr__(self, "delta", delta)

    def replace(self, **changes: Any) -> "PhysicalConstants":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self) if f.init}
        kwargs.update(changes)
        return PhysicalConstants(**kwargs)

    def doubled_oscillation(self) -> "PhysicalConstants":
        return self.replace(delta_m=2.0 * self.delta_m)

    def to_dict(self) -> dict[str, float]:
        return {
            "gamma_s": self.gamma_s,
            "gamma_l": self.gamma_l,
            "delta_m": self.delta_m,
            "eps_re": self.eps.real,
            "eps_im": self.eps.imag,
            "delta": self.delta,
        }


CONSTANT_KEYS = ("gamma_l", "delta_m", "eps_re", "eps_im")


def constants_from_mapping(data: Mapping[str, Any]) -> PhysicalConstants:
    """Build constants from ``{"gamma_l", "delta_m", "eps_re", "eps_im"}``; missing keys default."""
    unknown = set(data) - set(CONSTANT_KEYS)
    if unknown:
        raise ValueError(f"unknown constants keys: {sorted(unknown)}")
    for key, value in data.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"constants.{key} must be a number, got {value!r}")
    eps = complex(
        data.get("eps_re", DEFAULT_EPS.real),
        data.get("eps_im", DEFAULT_EPS.imag),
    )
    return PhysicalConstants(
        gamma_l=data.get("gamma_l", DEFAULT_GAMMA_L),
        delta_m=data.get("delta_m", DEFAULT_DELTA_M),
        eps=eps,
    )


def load_constants(path: str | Path) -> PhysicalConstants:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return constants_from_mapping(data)


@dataclass(frozen=True)
class Quasispin:
    """Point ``cos(theta/2)|K1> + sin(theta/2) e^{i phi}|K2>`` on the quasispin sphere."""

    theta: float
    phi: float = 0.0

    def __post_init__(self) -> None:
        theta, phi = float(self.theta), float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise ValueError("quasispin angles must be finite")
        if not 0.0 <= theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {theta}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi % (2.0 * math.pi))

    @property
    def vector(self) -> np.ndarray:
        return quasispin_vector(self.theta, self.phi)


def quasispin_vector(theta: float, phi: float) -> np.ndarray:
    return np.array(
        [math.cos(theta / 2.0), math.sin(theta / 2.0) * complex(math.cos(phi), math.sin(phi))],
        dtype=complex,
    )


K1 = Quasispin(0.0, 0.0)
K2 = Quasispin(math.pi, 0.0)
K0 = Quasispin(math.pi / 2.0, 0.0)
K0BAR = Quasispin(math.pi / 2.0, math.pi)


@dataclass(frozen=True)
class Measurement:
    """The question "are you in ``quasispin`` at ``time``?" (time in units of tau_S)."""

    quasispin: Quasispin
    time: float

    def __post_init__(self) -> None:
        t = float(self.time)
        if not math.isfinite(t) or t < 0:
            raise ValueError(f"measurement time must be finite and >= 0, got {self.time}")
        object.__setattr__(self, "time", t)


def mass_eigenstates(c: PhysicalConstants) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(K_S, K_L)`` as unit vectors in the CP basis."""
    norm = math.sqrt(1.0 + abs(c.eps) ** 2)
    k_s = np.array([1.0, c.eps], dtype=complex) / norm
    k_l = np.array([c.eps, 1.0], dtype=complex) / norm
    return k_s, k_l


def _mass_basis(c: PhysicalConstants) -> np.ndarray:
    k_s, k_l = mass_eigenstates(c)
    return np.column_stack([k_s, k_l])


def _decay_phases(t: float, c: PhysicalConstants) -> np.ndarray:
    # m_S = 0, m_L = delta_m; only the splitting is observable.
    return np.exp(np.array([-0.5 * c.gamma_s, -1j * c.delta_m - 0.5 * c.gamma_l]) * t)


def evolution_operator(t: float, c: PhysicalConstants) -> np.ndarray:
    """Wigner-Weisskopf evolution ``V diag(e^{-(i m + Gamma/2) t}) V^-1`` of a single kaon."""
    if not t >= 0:
        raise ValueError(f"evolution time must be >= 0, got {t}")
    v = _mass_basis(c)
    return v @ np.diag(_decay_phases(t, c)) @ np.linalg.inv(v)


def propagator(t: float, c: PhysicalConstants, picture: str = "effective") -> np.ndarray:
    """Map from the state space of ``rho`` to physical CP-basis amplitudes at time ``t``.

    In the exact picture this is the evolution operator itself. In the
    effective picture the state is written in K_S/K_L coordinates, so the map
    is ``V diag(...)``: each coordinate evolves with its own exponential.
    """
    check_picture(picture)
    if picture == "exact":
        return evolution_operator(t, c)
    if not t >= 0:
        raise ValueError(f"evolution time must be >= 0, got {t}")
    return _mass_basis(c) * _decay_phases(t, c)[np.newaxis, :]


def survival_norm(q: Quasispin, t: float, c: PhysicalConstants) -> float:
    """``e^{-Gamma_S t}|<K_S|k>|^2 + e^{-Gamma_L t}|<K_L|k>|^2``."""
    if not t >= 0:
        raise ValueError(f"time must be >= 0, got {t}")
    k_s, k_l = mass_eigenstates(c)
    k = q.vector
    return float(
        math.exp(-c.gamma_s * t) * abs(np.vdot(k_s, k)) ** 2
        + math.exp(-c.gamma_l * t) * abs(np.vdot(k_l, k)) ** 2
    )
