"""Generalized CHSH and CH witnesses with separable-state bounds.

A Bell operator ``W`` on the two-kaon space is linear in ``rho``, so its
extrema over separable states are attained on pure product states. Those are
parametrized by four angles and searched with a coarse grid followed by
Nelder-Mead refinement.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from kaonbell.observables import (
    PAULI,
    EffectiveObservable,
    TwoQubitState,
    effective_observable,
    oracle_joint_probs,
    psi_minus,
)
from kaonbell.physics import (
    K0BAR,
    Measurement,
    PhysicalConstants,
    Quasispin,
    check_picture,
    quasispin_vector,
)

__all__ = [
    "SLOTS",
    "BellSetting",
    "Extrema",
    "OptimizeResult",
    "ScanPoint",
    "ScanResult",
    "WitnessResult",
    "bell_operator",
    "ch_function",
    "ch_operator",
    "fingerprint",
    "optimize_times",
    "reference_setting",
    "parse_axis",
    "pauli_tensor",
    "product_state",
    "s_function",
    "separable_extrema",
    "time_scan",
    "violation",
]

SLOTS = ("n", "m", "nprime", "mprime")
_SLOT_ALIASES = {"n'": "nprime", "m'": "mprime", "np": "nprime", "mp": "mprime"}

REFERENCE_TIMES = (0.0, 1.34, 1.34, 2.80)


@dataclass(frozen=True)
class BellSetting:
    """Alice measures ``n`` or ``nprime``; Bob measures ``m`` or ``mprime``."""

    n: Measurement
    m: Measurement
    nprime: Measurement
    mprime: Measurement

    @classmethod
    def from_times(
        cls,
        t_n: float,
        t_m: float,
        t_nprime: float,
        t_mprime: float,
        question: Quasispin | Sequence[Quasispin] = K0BAR,
    ) -> "BellSetting":
        qs = [question] * 4 if isinstance(question, Quasispin) else list(question)
        if len(qs) != 4:
            raise ValueError("need one quasispin per slot")
        times = (t_n, t_m, t_nprime, t_mprime)
        return cls(*(Measurement(q, t) for q, t in zip(qs, times)))

    @property
    def times(self) -> tuple[float, float, float, float]:
        return (self.n.time, self.m.time, self.nprime.time, self.mprime.time)

    def measurements(self) -> tuple[Measurement, Measurement, Measurement, Measurement]:
        return (self.n, self.m, self.nprime, self.mprime)

    def with_times(self, **times: float) -> "BellSetting":
        kwargs = {}
        for slot in SLOTS:
            meas = getattr(self, slot)
            kwargs[slot] = Measurement(meas.quasispin, times[slot]) if slot in times else meas
        return BellSetting(**kwargs)

    def to_dict(self) -> dict:
        return {
            slot: {
                "theta": getattr(self, slot).quasispin.theta,
                "phi": getattr(self, slot).quasispin.phi,
                "time": getattr(self, slot).time,
            }
            for slot in SLOTS
        }


def reference_setting(question: Quasispin = K0BAR) -> BellSetting:
    """t_n = 0, t_m = t_n' = 1.34, t_m' = 2.80, all the same question."""
    return BellSetting.from_times(*REFERENCE_TIMES, question=question)


def fingerprint(c: PhysicalConstants, setting: BellSetting | None = None, **extra) -> str:
    payload = {"constants": c.to_dict()}
    if setting is not None:
        payload["setting"] = setting.to_dict()
    payload.update(extra)
    blob = json.dumps(payload, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _observables(
    s: BellSetting, c: PhysicalConstants, picture: str
) -> tuple[EffectiveObservable, ...]:
    return tuple(effective_observable(meas, c, picture) for meas in s.measurements())


def bell_operator(s: BellSetting, c: PhysicalConstants, picture: str = "effective") -> np.ndarray:
    """``O_n x (O_m - O_m') + O_n' x (O_m + O_m')``."""
    on, om, onp, omp = (o.matrix for o in _observables(s, c, picture))
    return np.kron(on, om - omp) + np.kron(onp, om + omp)


def ch_operator(s: BellSetting, c: PhysicalConstants, picture: str = "effective") -> np.ndarray:
    """CH combination of Yes projectors; single terms are P_A(n') and P_B(m)."""
    pn, pm, pnp, pmp = (o.yes_projector for o in _observables(s, c, picture))
    eye = np.eye(2)
    return (
        np.kron(pn, pm - pmp)
        + np.kron(pnp, pm + pmp)
        - np.kron(pnp, eye)
        - np.kron(eye, pm)
    )


def _expect(w: np.ndarray, rho: TwoQubitState) -> float:
    value = np.trace(w @ rho.rho)
    if abs(value.imag) > 1e-12:
        raise ArithmeticError(f"expectation has imaginary part {value.imag}")
    return float(value.real)


def s_function(
    s: BellSetting, rho: TwoQubitState, c: PhysicalConstants, picture: str = "effective"
) -> float:
    """``E(n,m) - E(n,m') + E(n',m) + E(n',m')`` with trace-form correlations."""
    on, om, onp, omp = (o.matrix for o in _observables(s, c, picture))

    def corr(a: np.ndarray, b: np.ndarray) -> float:
        return _expect(np.kron(a, b), rho)

    return corr(on, om) - corr(on, omp) + corr(onp, om) + corr(onp, omp)


def product_state(theta_a: float, phi_a: float, theta_b: float, phi_b: float) -> TwoQubitState:
    return TwoQubitState.from_vector(
        np.kron(quasispin_vector(theta_a, phi_a), quasispin_vector(theta_b, phi_b))
    )


# --- product-state optimization -------------------------------------------------

_SIGMA = np.concatenate([np.eye(2, dtype=complex)[np.newaxis], PAULI])
_PAULI_PRODUCTS = np.array([np.kron(a, b) for a in _SIGMA for b in _SIGMA])


def pauli_tensor(w: np.ndarray) -> np.ndarray:
    """Real ``T`` with ``<ab|W|ab> = ra . T . rb`` for ``r = (1, Bloch vector)``."""
    t = np.einsum("ij,aji->a", w, _PAULI_PRODUCTS).reshape(4, 4) / 4.0
    if np.abs(t.imag).max() > 1e-12:
        raise ArithmeticError("operator is not Hermitian")
    return np.ascontiguousarray(t.real)


def _bloch4(theta, phi):
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(np.ones_like(theta), st * np.cos(phi), st * np.sin(phi), np.cos(theta)),
        axis=-1,
    )


def _product_value(t: np.ndarray, x: np.ndarray) -> float:
    ta, pa, tb, pb = x
    sa = math.sin(ta)
    sb = math.sin(tb)
    ra = (1.0, sa * math.cos(pa), sa * math.sin(pa), math.cos(ta))
    rb = (1.0, sb * math.cos(pb), sb * math.sin(pb), math.cos(tb))
    total = 0.0
    for i in range(4):
        row = t[i]
        total += ra[i] * (row[0] + row[1] * rb[1] + row[2] * rb[2] + row[3] * rb[3])
    return total


def _canonical_angles(x: np.ndarray) -> tuple[float, float, float, float]:
    out = []
    for theta, phi in ((x[0], x[1]), (x[2], x[3])):
        theta = float(theta) % (2 * math.pi)
        phi = float(phi)
        if theta > math.pi:
            theta = 2 * math.pi - theta
            phi += math.pi
        out.extend([theta, phi % (2 * math.pi)])
    return tuple(out)


class Extrema(NamedTuple):
    s_min: float
    s_max: float
    argmin: tuple[float, float, float, float]
    argmax: tuple[float, float, float, float]


_SIMPLEX_STEP = 0.3
_XATOL = 2.5e-9  # per-coordinate; keeps the 4-d simplex diameter below 1e-8


def _nelder_mead(t: np.ndarray, x0: np.ndarray, sign: float) -> tuple[float, np.ndarray]:
    simplex = np.vstack([x0, x0 + _SIMPLEX_STEP * np.eye(4)])
    res = minimize(
        lambda x: sign * _product_value(t, x),
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": _XATOL,
            "fatol": 1e-14,
            "maxiter": 40000,
            "maxfev": 40000,
        },
    )
    return sign * float(res.fun), res.x


def _grid_angles(grid: int) -> np.ndarray:
    # Midpoint polar grid: no seed sits on a pole, where phi is degenerate.
    theta = (np.arange(grid) + 0.5) * math.pi / grid
    phi = np.linspace(0.0, 2 * math.pi, grid, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    return np.column_stack([th.ravel(), ph.ravel()])


def _angles_of(r: np.ndarray) -> tuple[float, float]:
    theta = math.acos(max(-1.0, min(1.0, r[2])))
    return theta, math.atan2(r[1], r[0]) % (2 * math.pi)


def _best_response(
    t: np.ndarray, x: np.ndarray, sign: float, max_iter: int = 20000
) -> tuple[float, np.ndarray]:
    """Alternate exact optimization of each party's Bloch vector from angles ``x``.

    The functional is affine in either vector when the other is fixed, so
    every step is exact and the value is monotone.
    """
    ra = _bloch4(x[0], x[1])
    rb = _bloch4(x[2], x[3])
    value = sign * float(ra @ t @ rb)
    for _ in range(max_iter):
        wa = t @ rb
        na = np.linalg.norm(wa[1:])
        if na > 0:
            ra = np.concatenate([[1.0], -sign * wa[1:] / na])
        wb = ra @ t
        nb = np.linalg.norm(wb[1:])
        if nb > 0:
            rb = np.concatenate([[1.0], -sign * wb[1:] / nb])
        new = sign * float(ra @ t @ rb)
        if value - new <= 1e-15:
            value = min(value, new)
            break
        value = new
    return sign * value, np.array([*_angles_of(ra[1:]), *_angles_of(rb[1:])])


def _optimize_tensor(
    t: np.ndarray,
    grid: int = 9,
    n_seeds: int = 10,
    restarts: int = 0,
    seed: int = 0,
) -> Extrema:
    angles = _grid_angles(grid)
    r = _bloch4(angles[:, 0], angles[:, 1])
    values = r @ t @ r.T  # values[i, j]: Alice at angles[i], Bob at angles[j]
    flat = values.ravel()
    n_side = len(angles)

    extra = np.empty((0, 4))
    if restarts:
        rng = np.random.default_rng(seed)
        extra = np.column_stack(
            [
                np.arccos(rng.uniform(-1, 1, restarts)),
                rng.uniform(0, 2 * math.pi, restarts),
                np.arccos(rng.uniform(-1, 1, restarts)),
                rng.uniform(0, 2 * math.pi, restarts),
            ]
        )

    results = []
    for sign in (1.0, -1.0):
        order = np.argsort(sign * flat, kind="stable")[:n_seeds]
        seeds = [np.concatenate([angles[k // n_side], angles[k % n_side]]) for k in order]
        seeds.extend(extra)
        best_val, best_x = math.inf, None
        for x0 in seeds:
            _, x = _nelder_mead(t, np.asarray(x0, dtype=float), sign)
            val, x = _best_response(t, x, sign)
            if sign * val < best_val:
                best_val, best_x = sign * val, x
        results.append((sign * best_val, _canonical_angles(best_x)))
    (s_min, arg_min), (s_max, arg_max) = results
    return Extrema(s_min, s_max, arg_min, arg_max)


def _fast_separable_min(t: np.ndarray, grid: int = 13, n_seeds: int = 4) -> float:
    """Grid seeds plus best-response polishing; used inside the time optimizer."""
    angles = _grid_angles(grid)
    r = _bloch4(angles[:, 0], angles[:, 1])
    flat = (r @ t @ r.T).ravel()
    n_side = len(angles)
    best = math.inf
    for k in np.argsort(flat, kind="stable")[:n_seeds]:
        x0 = np.concatenate([angles[k // n_side], angles[k % n_side]])
        best = min(best, _best_response(t, x0, 1.0)[0])
    return best


def separable_extrema(
    s: BellSetting,
    c: PhysicalConstants,
    picture: str = "effective",
    *,
    grid: int = 9,
    n_seeds: int = 10,
    restarts: int = 0,
    seed: int = 0,
) -> Extrema:
    """Minimum and maximum of S over all separable states.

    ``restarts`` adds that many random Nelder-Mead starts (drawn from
    ``seed``) on top of the deterministic grid seeds.
    """
    return _optimize_tensor(
        pauli_tensor(bell_operator(s, c, picture)), grid, n_seeds, restarts, seed
    )


@dataclass(frozen=True)
class WitnessResult:
    s_state: float
    s_sep_min: float
    s_sep_max: float
    argmin_state: tuple[float, float, float, float]
    argmax_state: tuple[float, float, float, float]

    @property
    def delta_min(self) -> float:
        return self.s_state - self.s_sep_min

    @property
    def delta_max(self) -> float:
        return self.s_sep_max - self.s_state

    def to_dict(self) -> dict:
        return {
            "s_state": self.s_state,
            "s_sep_min": self.s_sep_min,
            "s_sep_max": self.s_sep_max,
            "delta_min": self.delta_min,
            "delta_max": self.delta_max,
            "argmin_state": list(self.argmin_state),
            "argmax_state": list(self.argmax_state),
        }


def violation(
    s: BellSetting,
    rho: TwoQubitState,
    c: PhysicalConstants,
    picture: str = "effective",
) -> WitnessResult:
    """S on ``rho`` against its separable bounds; ``delta_min < 0`` certifies nonlocality."""
    ext = separable_extrema(s, c, picture)
    return WitnessResult(
        s_state=s_function(s, rho, c, picture),
        s_sep_min=ext.s_min,
        s_sep_max=ext.s_max,
        argmin_state=ext.argmin,
        argmax_state=ext.argmax,
    )


def _ch_from_oracle(
    s: BellSetting, rho: TwoQubitState, c: PhysicalConstants, picture: str
) -> float:
    # Probabilities are linear in rho: average the pure-state oracle over its eigen-ensemble.
    weights, vecs = np.linalg.eigh(rho.rho)
    total = 0.0
    for w, psi in zip(weights, vecs.T):
        if w <= 1e-15:
            continue
        p = {
            (a, b): oracle_joint_probs(getattr(s, a), getattr(s, b), psi, c, picture)
            for a in ("n", "nprime")
            for b in ("m", "mprime")
        }
        value = (
            p["n", "m"].p_yy
            - p["n", "mprime"].p_yy
            + p["nprime", "m"].p_yy
            + p["nprime", "mprime"].p_yy
            - p["nprime", "m"].p_yes_a
            - p["nprime", "m"].p_yes_b
        )
        total += w * value
    return float(total)


def ch_function(
    s: BellSetting,
    rho: TwoQubitState,
    c: PhysicalConstants,
    picture: str = "effective",
) -> tuple[float, float, float]:
    """``(CH value, separable min, separable max)`` from single and joint Yes probabilities."""
    if picture == "printed":
        value = _expect(ch_operator(s, c, picture), rho)
    else:
        value = _ch_from_oracle(s, rho, c, picture)
    ext = _optimize_tensor(pauli_tensor(ch_operator(s, c, picture)))
    return value, ext.s_min, ext.s_max


# --- scans -----------------------------------------------------------------------


def parse_axis(axis: str | Sequence[str]) -> tuple[str, ...]:
    """``"m+nprime"`` or ``["m", "n'"]`` -> ``("m", "nprime")``."""
    parts = axis.split("+") if isinstance(axis, str) else list(axis)
    out = []
    for part in parts:
        name = part.strip()
        name = _SLOT_ALIASES.get(name, name)
        if name.startswith("t_"):
            name = _SLOT_ALIASES.get(name[2:], name[2:])
        if name not in SLOTS:
            raise ValueError(f"unknown time slot {part!r}; expected one of {SLOTS}")
        if name not in out:
            out.append(name)
    if not out:
        raise ValueError("empty axis")
    return tuple(out)


@dataclass(frozen=True)
class ScanPoint:
    t: float
    s_state: float
    s_sep_min: float
    s_sep_max: float

    @property
    def delta_min(self) -> float:
        return self.s_state - self.s_sep_min


CSV_HEADER = ("t", "s_state", "s_sep_min", "s_sep_max", "delta_min")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


@dataclass
class ScanResult:
    points: list[ScanPoint]
    template: BellSetting | None = None
    axis: tuple[str, ...] = ()
    constants: PhysicalConstants | None = None
    picture: str = "effective"
    fingerprint: str = field(default="")

    def __post_init__(self) -> None:
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("scan points must be strictly increasing in t")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in self.points:
            writer.writerow(
                [_fmt(v) for v in (p.t, p.s_state, p.s_sep_min, p.s_sep_max, p.delta_min)]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScanResult":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"expected CSV header {','.join(CSV_HEADER)}")
        points = [ScanPoint(*(float(v) for v in row[:4])) for row in rows[1:] if row]
        return cls(points)

    def to_json(self) -> dict:
        return {
            "axis": list(self.axis),
            "picture": self.picture,
            "template": self.template.to_dict() if self.template else None,
            "constants": self.constants.to_dict() if self.constants else None,
            "fingerprint": self.fingerprint,
            "points": [
                {"t": p.t, "s_state": p.s_state, "s_sep_min": p.s_sep_min,
                 "s_sep_max": p.s_sep_max, "delta_min": p.delta_min}
                for p in self.points
            ],
        }


def scan_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise ValueError("scan range and step must be finite")
    if lo < 0:
        raise ValueError(f"scan lower bound must be >= 0, got {lo}")
    if step <= 0:
        raise ValueError(f"scan step must be > 0, got {step}")
    if hi < lo:
        raise ValueError(f"empty scan range [{lo}, {hi}]")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _scan_point(args) -> ScanPoint:
    template, axis, t, rho, c, picture = args
    s = template.with_times(**{slot: t for slot in axis})
    w = violation(s, rho, c, picture)
    return ScanPoint(float(t), w.s_state, w.s_sep_min, w.s_sep_max)


def time_scan(
    template: BellSetting,
    axis: str | Sequence[str],
    lo: float,
    hi: float,
    step: float,
    rho: TwoQubitState | None = None,
    c: PhysicalConstants | None = None,
    picture: str = "effective",
    workers: int | None = None,
) -> ScanResult:
    """Evaluate the witness while the slots in ``axis`` sweep ``lo, lo+step, ... <= hi``."""
    check_picture(picture)
    slots = parse_axis(axis)
    rho = psi_minus() if rho is None else rho
    c = PhysicalConstants() if c is None else c
    jobs = [(template, slots, float(t), rho, c, picture) for t in scan_grid(lo, hi, step)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_scan_point, jobs))
    else:
        points = [_scan_point(job) for job in jobs]
    return ScanResult(
        points=points,
        template=template,
        axis=slots,
        constants=c,
        picture=picture,
        fingerprint=fingerprint(c, template, axis=list(slots), picture=picture),
    )


# --- time optimization -----------------------------------------------------------


@dataclass
class OptimizeResult:
    setting: BellSetting
    witness: WitnessResult
    objective: str
    value: float
    restarts: list[dict]


MAX_BOX = 100.0


def optimize_times(
    box: float,
    rho: TwoQubitState | None = None,
    c: PhysicalConstants | None = None,
    picture: str = "effective",
    *,
    question: Quasispin = K0BAR,
    objective: str = "violation",
    grid: int = 6,
    n_starts: int = 6,
) -> OptimizeResult:
    """Search ``[0, box]^4`` for the four measurement times.

    ``objective="violation"`` minimizes ``delta_min``; ``"chsh"`` maximizes
    ``|S(rho)|`` against the original bound 2. Starts come from a fixed
    ``grid^4`` schedule, so results are reproducible.
    """
    check_picture(picture)
    if not 0 <= box <= MAX_BOX:
        raise ValueError(f"time box must lie in [0, {MAX_BOX}], got {box}")
    if objective not in ("violation", "chsh"):
        raise ValueError(f"unknown objective {objective!r}")
    rho = psi_minus() if rho is None else rho
    c = PhysicalConstants() if c is None else c

    def setting_at(x) -> BellSetting:
        x = np.clip(np.asarray(x, dtype=float), 0.0, box)
        return BellSetting.from_times(*x, question=question)

    def score(x) -> float:
        s = setting_at(x)
        w = bell_operator(s, c, picture)
        s_state = _expect(w, rho)
        if objective == "chsh":
            return -abs(s_state)
        return s_state - _fast_separable_min(pauli_tensor(w))

    restarts: list[dict] = []
    if box == 0:
        best_x = np.zeros(4)
    else:
        axis = np.linspace(0.0, box, grid)
        candidates = np.array(np.meshgrid(axis, axis, axis, axis, indexing="ij")).reshape(4, -1).T
        coarse = np.array([score(x) for x in candidates])
        starts = candidates[np.argsort(coarse, kind="stable")[:n_starts]]
        best_val, best_x = math.inf, starts[0]
        for x0 in starts:
            res = minimize(
                score, x0, method="Nelder-Mead", bounds=[(0.0, box)] * 4,
                options={"xatol": 1e-4, "fatol": 1e-7, "maxiter": 2000},
            )
            restarts.append({"start": x0.tolist(), "times": res.x.tolist(), "score": float(res.fun)})
            if res.fun < best_val:
                best_val, best_x = float(res.fun), res.x

    setting = setting_at(best_x)
    witness = violation(setting, rho, c, picture)
    value = -abs(witness.s_state) if objective == "chsh" else witness.delta_min
    return OptimizeResult(setting, witness, objective, value, restarts)
