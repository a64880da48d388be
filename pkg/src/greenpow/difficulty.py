"""Dual-track difficulty retargeting.

Difficulty is expressed as the hash-power fraction a target is calibrated
for: a round mined by active power P at difficulty d solves at λ·P/d, so
d1 = 1 means "full network power gives one block per T_E". The expected
work of a block is therefore proportional to its difficulty.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

from .stochastic import MiningRate

__all__ = [
    "DifficultyState",
    "RetargetRecord",
    "Target",
    "advance",
    "effective_rate",
    "record_block_interval",
    "retarget",
]

log = logging.getLogger(__name__)


class Target(str, Enum):
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True)
class RetargetRecord:
    window: int
    track: str
    d1: float
    d2: float
    t_avg1: float | None
    t_avg2: float | None


@dataclass(frozen=True, slots=True)
class DifficultyState:
    """Difficulties plus the running statistics of the current window.

    Window statistics are kept as (count, sum) per track; that is all the
    retarget rule needs, and it keeps per-block snapshots O(1).
    """

    d1: float = 1.0
    d2: float = 1.0
    window_blocks: int = 2016
    t_expected: float = 600.0
    n1: int = 0
    sum1: float = 0.0
    n2: int = 0
    sum2: float = 0.0
    retargets: int = 0

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValueError("difficulties must be positive")
        if self.window_blocks < 1:
            raise ValueError("window_blocks must be at least 1")
        if not (self.t_expected > 0 and math.isfinite(self.t_expected)):
            raise ValueError("t_expected must be positive")

    @property
    def nominal_rate(self) -> MiningRate:
        return MiningRate(1.0 / self.t_expected)

    def difficulty(self, target: Target) -> float:
        return self.d1 if Target(target) is Target.D1 else self.d2


def record_block_interval(state: DifficultyState, target: Target, interval: float) -> DifficultyState:
    """Add one block interval to the track selected by the block's target label.

    FIRST and SECOND_AFTER_TIMEOUT blocks carry D1, SECOND blocks carry D2, so
    classifying by target is the same as the header check a node would do.
    """
    if interval < 0 or math.isnan(interval):
        raise ValueError(f"interval must be non-negative, got {interval}")
    if Target(target) is Target.D1:
        return replace(state, n1=state.n1 + 1, sum1=state.sum1 + interval)
    return replace(state, n2=state.n2 + 1, sum2=state.sum2 + interval)


def retarget(state: DifficultyState, track: Target | None = None) -> tuple[DifficultyState, RetargetRecord]:
    """Apply d ← d·T_E/T_avg to one track (or both when ``track`` is None) and reset its window."""
    tracks = (Target.D1, Target.D2) if track is None else (Target(track),)
    d1, d2 = state.d1, state.d2
    n1, s1, n2, s2 = state.n1, state.sum1, state.n2, state.sum2
    avg1 = avg2 = None
    if Target.D1 in tracks:
        if n1 == 0 or s1 <= 0:
            log.warning("empty D1 window; carrying d1=%g forward", d1)
        else:
            avg1 = s1 / n1
            d1 = d1 * state.t_expected / avg1
        n1, s1 = 0, 0.0
    if Target.D2 in tracks:
        if n2 == 0 or s2 <= 0:
            log.warning("empty D2 window; carrying d2=%g forward", d2)
        else:
            avg2 = s2 / n2
            d2 = d2 * state.t_expected / avg2
        n2, s2 = 0, 0.0
    new = replace(state, d1=d1, d2=d2, n1=n1, sum1=s1, n2=n2, sum2=s2, retargets=state.retargets + 1)
    label = "both" if track is None else Target(track).value
    return new, RetargetRecord(state.retargets, label, d1, d2, avg1, avg2)


def advance(state: DifficultyState, target: Target, interval: float) -> tuple[DifficultyState, RetargetRecord | None]:
    """Record one interval and retarget its track if that track's window just filled."""
    state = record_block_interval(state, target, interval)
    count = state.n1 if Target(target) is Target.D1 else state.n2
    if count >= state.window_blocks:
        return retarget(state, target)
    return state, None


_ROUND_ALIASES = {"FIRST": Target.D1, "SECOND": Target.D2, "SECOND_AFTER_TIMEOUT": Target.D1}


def effective_rate(state: DifficultyState, round_target, active_power_fraction: float) -> MiningRate:
    """λ_eff = λ·(active power / power the round's difficulty is calibrated for).

    ``round_target`` is a Target or a round name (FIRST, SECOND).
    """
    key = getattr(round_target, "value", round_target)
    round_target = _ROUND_ALIASES.get(key) or Target(key)
    if not active_power_fraction > 0:
        raise ValueError("no active hash power in this round")
    lam = 1.0 / state.t_expected
    return MiningRate(lam * active_power_fraction / state.difficulty(round_target))
