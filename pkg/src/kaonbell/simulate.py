"""Seeded Monte-Carlo emulation of the active-measurement experiment.

Each event draws Alice's and Bob's settings, then a Yes/No outcome pair from
the joint distribution of the chosen measurements. Event ``i`` always consumes
the Philox counter blocks ``2i`` and ``2i+1`` of the run's key, so any range
of events can be generated independently and still match a serial run
record for record.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from kaonbell.observables import JointProbs, TwoQubitState, oracle_joint_probs
from kaonbell.physics import Measurement, PhysicalConstants
from kaonbell.witness import BellSetting

__all__ = [
    "UNIFORMS_PER_EVENT",
    "Estimate",
    "EventBatch",
    "EventRecord",
    "efficiency_folded",
    "estimate_s",
    "estimate_from_counts",
    "generate_events",
    "joint_probs",
    "s_from_probs",
    "tally",
]

UNIFORMS_PER_EVENT = 8  # two Philox blocks; five are used
_BLOCK = 1 << 16

SETTING_A = ("n", "nprime")
SETTING_B = ("m", "mprime")
OUTCOME = ("N", "Y")
CSV_HEADER = "event_id,setting_a,setting_b,outcome_a,outcome_b"


@dataclass(frozen=True)
class EventRecord:
    event_id: int
    setting_a: str
    setting_b: str
    outcome_a: str
    outcome_b: str


@dataclass
class EventBatch:
    """Column store of events; settings are 0/1 indices, outcomes 1 = Yes."""

    event_id: np.ndarray
    setting_a: np.ndarray
    setting_b: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.event_id)

    def records(self) -> Iterator[EventRecord]:
        for i, sa, sb, oa, ob in zip(
            self.event_id.tolist(), self.setting_a.tolist(), self.setting_b.tolist(),
            self.outcome_a.tolist(), self.outcome_b.tolist(),
        ):
            yield EventRecord(i, SETTING_A[sa], SETTING_B[sb], OUTCOME[oa], OUTCOME[ob])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        sa = np.array(SETTING_A)[self.setting_a]
        sb = np.array(SETTING_B)[self.setting_b]
        oa = np.array(OUTCOME)[self.outcome_a]
        ob = np.array(OUTCOME)[self.outcome_b]
        buf.writelines(
            f"{i},{a},{b},{x},{y}\n"
            for i, a, b, x, y in zip(self.event_id.tolist(), sa, sb, oa, ob)
        )
        return buf.getvalue()

    @classmethod
    def concatenate(cls, batches: Iterable["EventBatch"]) -> "EventBatch":
        batches = list(batches)
        cols = ("event_id", "setting_a", "setting_b", "outcome_a", "outcome_b")
        merged = {k: np.concatenate([getattr(b, k) for b in batches]) for k in cols}
        order = np.argsort(merged["event_id"], kind="stable")
        return cls(**{k: v[order] for k, v in merged.items()}, seed=batches[0].seed)


def joint_probs(
    ma: Measurement,
    mb: Measurement,
    state: TwoQubitState | np.ndarray,
    c: PhysicalConstants,
    picture: str = "effective",
) -> JointProbs:
    """Oracle joint distribution for a pure vector or, by linearity, a density matrix."""
    if not isinstance(state, TwoQubitState):
        return oracle_joint_probs(ma, mb, state, c, picture)
    weights, vecs = np.linalg.eigh(state.rho)
    acc = np.zeros(4)
    for w, psi in zip(weights, vecs.T):
        if w > 1e-15:
            acc += w * oracle_joint_probs(ma, mb, psi, c, picture).as_array()
    return JointProbs(*acc.tolist())


def efficiency_folded(p: JointProbs, efficiency_a: float, efficiency_b: float) -> JointProbs:
    """Distribution after each side's Yes is lost with probability ``1 - efficiency``."""
    ea, eb = efficiency_a, efficiency_b
    p_yy = ea * eb * p.p_yy
    p_yn = ea * (p.p_yn + (1 - eb) * p.p_yy)
    p_ny = eb * (p.p_ny + (1 - ea) * p.p_yy)
    return JointProbs(p_yy, p_yn, p_ny, 1.0 - p_yy - p_yn - p_ny)


def s_from_probs(probs: dict[tuple[int, int], JointProbs]) -> float:
    """CHSH combination with ``probs[(a, b)]`` for setting indices a, b in {0, 1}."""
    e = {k: p.p_yy + p.p_nn - p.p_yn - p.p_ny for k, p in probs.items()}
    return e[0, 0] - e[0, 1] + e[1, 0] + e[1, 1]


def _check_efficiency(name: str, value: float) -> None:
    if not (0.0 < value <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {value}")


def _uniforms(seed: int, start: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=seed)
    bitgen.advance(2 * start)
    return np.random.Generator(bitgen).random((count, UNIFORMS_PER_EVENT))


def setting_probabilities(
    s: BellSetting,
    state: TwoQubitState | np.ndarray,
    c: PhysicalConstants,
    picture: str = "effective",
) -> dict[tuple[int, int], JointProbs]:
    alice = (s.n, s.nprime)
    bob = (s.m, s.mprime)
    return {
        (a, b): joint_probs(alice[a], bob[b], state, c, picture)
        for a in (0, 1)
        for b in (0, 1)
    }


def generate_events(
    s: BellSetting,
    state: TwoQubitState | np.ndarray,
    c: PhysicalConstants,
    n_events: int,
    seed: int,
    efficiency_a: float = 1.0,
    efficiency_b: float = 1.0,
    *,
    picture: str = "effective",
    start: int = 0,
    p_prime_a: float = 0.5,
    p_prime_b: float = 0.5,
) -> EventBatch:
    """Draw events ``start .. start + n_events - 1`` of the stream keyed by ``seed``.

    A Yes that goes undetected is recorded as No; a missed detection can
    never produce a Yes.
    """
    if n_events < 1:
        raise ValueError(f"n_events must be >= 1, got {n_events}")
    if start < 0:
        raise ValueError(f"start must be >= 0, got {start}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    _check_efficiency("efficiency_a", efficiency_a)
    _check_efficiency("efficiency_b", efficiency_b)
    for name, p in (("p_prime_a", p_prime_a), ("p_prime_b", p_prime_b)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")

    probs = setting_probabilities(s, state, c, picture)
    cum = np.zeros((2, 2, 4))
    for (a, b), p in probs.items():
        try:
            p.check(atol=1e-12)
        except ValueError as exc:
            raise ValueError(
                f"setting pair ({SETTING_A[a]}, {SETTING_B[b]}) has no valid outcome "
                f"distribution in the {picture} picture: {exc}"
            ) from None
        cum[a, b] = np.cumsum(np.clip(p.as_array(), 0.0, None))
        cum[a, b] /= cum[a, b, -1]

    batches = []
    for offset in range(0, n_events, _BLOCK):
        first = start + offset
        count = min(_BLOCK, n_events - offset)
        u = _uniforms(seed, first, count)
        sa = (u[:, 0] < p_prime_a).astype(np.int8)
        sb = (u[:, 1] < p_prime_b).astype(np.int8)
        # cells ordered YY, YN, NY, NN
        cell = (u[:, 2, np.newaxis] >= cum[sa, sb][:, :3]).sum(axis=1)
        oa = (cell <= 1).astype(np.int8)
        ob = ((cell == 0) | (cell == 2)).astype(np.int8)
        oa &= (u[:, 3] < efficiency_a).astype(np.int8)
        ob &= (u[:, 4] < efficiency_b).astype(np.int8)
        batches.append(
            EventBatch(
                np.arange(first, first + count, dtype=np.int64), sa, sb, oa, ob, seed=seed
            )
        )
    return EventBatch.concatenate(batches)


def tally(events: EventBatch) -> np.ndarray:
    """Counts indexed ``[setting_a, setting_b, outcome_a, outcome_b]`` (outcome 1 = Yes)."""
    idx = (
        8 * events.setting_a.astype(np.int64)
        + 4 * events.setting_b
        + 2 * events.outcome_a
        + events.outcome_b
    )
    return np.bincount(idx, minlength=16).reshape(2, 2, 2, 2)


@dataclass(frozen=True)
class Estimate:
    s_hat: float
    stderr: float
    e_hat: np.ndarray
    counts: np.ndarray
    n_events: int

    def counts_dict(self) -> dict:
        return {
            f"{SETTING_A[a]},{SETTING_B[b]}": {
                f"{OUTCOME[x]}{OUTCOME[y]}": int(self.counts[a, b, x, y])
                for x in (1, 0)
                for y in (1, 0)
            }
            for a in (0, 1)
            for b in (0, 1)
        }


def estimate_from_counts(counts: np.ndarray) -> Estimate:
    counts = np.asarray(counts, dtype=np.int64).reshape(2, 2, 2, 2)
    n_pair = counts.sum(axis=(2, 3))
    for a in (0, 1):
        for b in (0, 1):
            if n_pair[a, b] == 0:
                raise ValueError(f"no events for setting pair ({SETTING_A[a]}, {SETTING_B[b]})")
    agree = counts[:, :, 1, 1] + counts[:, :, 0, 0]
    disagree = counts[:, :, 1, 0] + counts[:, :, 0, 1]
    e_hat = (agree - disagree) / n_pair
    s_hat = e_hat[0, 0] - e_hat[0, 1] + e_hat[1, 0] + e_hat[1, 1]
    # Each k*l = +-1 draw has variance 1 - E^2; the four pairs are independent.
    stderr = math.sqrt(float(np.sum((1.0 - e_hat**2) / n_pair)))
    return Estimate(float(s_hat), stderr, e_hat, counts, int(counts.sum()))


def estimate_s(events: EventBatch) -> Estimate:
    """CHSH estimate with binomial standard error from an event sample."""
    return estimate_from_counts(tally(events))
