"""Energy accounting: a per-miner integration ledger plus closed-form oracles.

Energy is power × time with power_i = h_i·𝒫 while mining and zero in
power-save mode. With 𝒫 = 1 and time in units of 1/λ the numbers are the
normalized energies used throughout (PoW costs 1/λ per block).
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .stochastic import HashPowerProfile, MiningRate

__all__ = [
    "EnergyLedger",
    "FirstRoundEnergy",
    "closed_form_first_round",
    "closed_form_pow",
    "closed_form_second_round",
    "integrate",
    "saving",
]


class EnergyLedger:
    """Integrated energy per miner and per (epoch, round).

    Rounds are 1 (open race and runner-up continuation) and 2 (second round,
    whether mined by runners-up or by everyone after a timeout).
    """

    __slots__ = ("per_miner", "total_power", "_epochs")

    def __init__(self, n: int, total_power: float = 1.0):
        self.per_miner = np.zeros(n)
        self.total_power = float(total_power)
        self._epochs: dict[int, list[float]] = {}

    def integrate(self, miner: int, power_fraction: float, interval: float, epoch: int, round_: int) -> EnergyLedger:
        if interval < 0:
            raise ValueError(f"negative interval {interval}")
        if interval == 0 or power_fraction == 0:
            return self
        e = power_fraction * self.total_power * interval
        self.per_miner[miner] += e
        self._epochs.setdefault(epoch, [0.0, 0.0])[round_ - 1] += e
        return self

    def add_epoch_totals(self, epoch: int, e_1st: float, e_2nd: float) -> None:
        """Bulk form used by the epoch engine (per-miner totals are added separately)."""
        row = self._epochs.setdefault(epoch, [0.0, 0.0])
        row[0] += e_1st
        row[1] += e_2nd

    def epoch(self, epoch: int) -> tuple[float, float]:
        e1, e2 = self._epochs.get(epoch, (0.0, 0.0))
        return e1, e2

    @property
    def epochs(self) -> dict[int, tuple[float, float]]:
        return {k: (v[0], v[1]) for k, v in sorted(self._epochs.items())}

    @property
    def total(self) -> float:
        return float(self.per_miner.sum())

    def merge(self, other: EnergyLedger) -> EnergyLedger:
        """Sum two ledgers (associative, order-independent up to float rounding)."""
        if other.per_miner.shape != self.per_miner.shape or other.total_power != self.total_power:
            raise ValueError("ledgers describe different networks")
        out = EnergyLedger(self.per_miner.size, self.total_power)
        out.per_miner = self.per_miner + other.per_miner
        for src in (self._epochs, other._epochs):
            for k, (a, b) in src.items():
                out.add_epoch_totals(k, a, b)
        return out


def integrate(ledger: EnergyLedger, miner: int, power_fraction: float, interval: float, epoch: int = 0, round_: int = 1):
    return ledger.integrate(miner, power_fraction, interval, epoch, round_)


def closed_form_pow(profile: HashPowerProfile, rate: MiningRate) -> float:
    """Energy per PoW block, E = 𝒫/λ (the hash fractions sum to one)."""
    return profile.total_power / rate.lam


class FirstRoundEnergy(NamedTuple):
    event_driven: float
    literal: float


def closed_form_first_round(
    profile: HashPowerProfile,
    rate: MiningRate,
    winner: int,
    runnerups: Sequence[int],
    runnerup_times: Sequence[float],
    closed_at: float | None = None,
) -> FirstRoundEnergy:
    """First-round energy of one epoch.

    ``runnerup_times`` are measured from the winner's solve. The event-driven
    value is 𝒫/λ for the open race plus, for every gap between consecutive
    solves, the power still racing times the gap; the winner and finished
    runners-up no longer race. ``closed_at`` extends the last gap to the
    moment racing stopped (the end of an η window); by default racing stops
    at the last runner-up.

    ``literal`` evaluates the per-runner-up sum
    𝒫(1/λ + Σ_i t_i (1 − h_f + Σ_{j=i−1}^{k−1} h_j)) with h_{s−1} = 0 and
    t_i the i-th gap, kept for comparison only.
    """
    h = profile.fractions
    runnerups = list(runnerups)
    times = np.asarray(runnerup_times, dtype=float)
    if len(runnerups) != times.size:
        raise ValueError("one time per runner-up is required")
    if winner in runnerups:
        raise ValueError("the winner cannot be a runner-up")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("runner-up times must be non-negative and sorted ascending")
    base = profile.total_power / rate.lam
    if not runnerups:
        return FirstRoundEnergy(base, base)
    gaps = np.diff(np.concatenate(([0.0], times)))
    hr = h[runnerups]
    left = 1.0 - h[winner] - np.concatenate(([0.0], np.cumsum(hr)[:-1]))
    event = float(np.sum(left * gaps))
    if closed_at is not None:
        if closed_at < times[-1]:
            raise ValueError("racing cannot stop before the last runner-up")
        event += (1.0 - h[winner] - hr.sum()) * (closed_at - times[-1])
    # per-runner-up sum: index i runs over runners-up, inner sum over h_{i-1}..h_{k-1} with h_{s-1}=0
    shifted = np.concatenate(([0.0], hr))
    tail = np.cumsum(shifted[::-1])[::-1][: len(runnerups)] - shifted[len(runnerups)]
    literal = float(np.sum(gaps * (1.0 - h[winner] + tail)))
    return FirstRoundEnergy(base + profile.total_power * event, base + profile.total_power * literal)


def closed_form_second_round(profile: HashPowerProfile, rate: MiningRate, runnerups: Sequence[int]) -> float:
    """𝒫/λ·Σ_{r} h_r with λ the calibrated second-round rate."""
    runnerups = list(runnerups)
    if not runnerups:
        raise ValueError("the second round needs at least one runner-up")
    return profile.total_power / rate.lam * float(profile.fractions[runnerups].sum())


def saving(e_pow: float, e_1st: float, e_2nd: float) -> float:
    """Percentage saved against two PoW blocks: (2E − E_1st − E_2nd)/(2E)·100."""
    if min(e_pow, e_1st, e_2nd) < 0 or not math.isfinite(e_pow + e_1st + e_2nd):
        raise ValueError("energies must be finite and non-negative")
    if e_pow == 0:
        raise ValueError("PoW energy must be positive")
    return (2.0 * e_pow - e_1st - e_2nd) / (2.0 * e_pow) * 100.0
