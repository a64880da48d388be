"""Mining as a Poisson process: seeded random streams, solve-time samplers,
hash-power profiles and per-puzzle race schedules."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "HashPowerProfile",
    "MiningRate",
    "RandomSource",
    "Timing",
    "build_power_profile",
    "race_offsets",
    "sample_block_time",
    "sample_runnerup_time",
    "winner_draw",
]

_SUM_TOL = 1e-9


def _key_part(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream keys must be non-negative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


class RandomSource:
    """Deterministic random stream identified by ``(seed, stream_id)``.

    ``substream(*keys)`` derives an independent child stream; the same keys
    always give the same child, regardless of how much the parent was used.
    """

    __slots__ = ("seed", "stream_id", "_path", "_gen")

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise TypeError("seed must be an integer")
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = int(seed)
        self.stream_id = _key_part(stream_id)
        self._path = tuple(_path)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def substream(self, *keys) -> RandomSource:
        return RandomSource(self.seed, self.stream_id, self._path + tuple(_key_part(k) for k in keys))

    def uniform(self) -> float:
        """One draw from [0, 1)."""
        return float(self.generator.random())

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


@dataclass(frozen=True)
class MiningRate:
    """Block generation rate λ in blocks per time unit (T_E = 1/λ)."""

    lam: float

    def __post_init__(self):
        if not (isinstance(self.lam, (int, float)) and math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be a positive finite number, got {self.lam!r}")

    @property
    def expected_interval(self) -> float:
        return 1.0 / self.lam

    def scaled(self, factor: float) -> MiningRate:
        return MiningRate(self.lam * factor)


@dataclass(frozen=True)
class HashPowerProfile:
    """Per-miner hash fractions h_i (all positive, summing to one) and the total power 𝒫."""

    fractions: np.ndarray = field(repr=False)
    total_power: float = 1.0

    def __post_init__(self):
        h = np.array(self.fractions, dtype=float).reshape(-1)
        if h.size == 0:
            raise ValueError("a power profile needs at least one miner")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("every hash fraction must be positive and finite")
        if abs(h.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"hash fractions must sum to 1 (got {h.sum():.12g})")
        if not (math.isfinite(self.total_power) and self.total_power > 0):
            raise ValueError("total power must be positive")
        h.flags.writeable = False
        object.__setattr__(self, "fractions", h)

    @classmethod
    def uniform(cls, n: int, total_power: float = 1.0) -> HashPowerProfile:
        if n < 1:
            raise ValueError("n must be at least 1")
        return cls(np.full(n, 1.0 / n), total_power)

    @classmethod
    def from_weights(cls, weights, total_power: float = 1.0) -> HashPowerProfile:
        w = np.asarray(weights, dtype=float)
        if w.size == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        return cls(w / w.sum(), total_power)

    @property
    def n(self) -> int:
        return int(self.fractions.size)

    def power(self, miners) -> float:
        idx = np.fromiter(miners, dtype=np.int64)
        return float(self.fractions[idx].sum()) if idx.size else 0.0

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashPowerProfile):
            return NotImplemented
        return self.total_power == other.total_power and np.array_equal(self.fractions, other.fractions)

    def __hash__(self) -> int:
        return hash((self.fractions.tobytes(), self.total_power))


def build_power_profile(
    n: int,
    top_pct: float = 50.0,
    held_pct: float = 50.0,
    rng: RandomSource | None = None,
    total_power: float = 1.0,
) -> HashPowerProfile:
    """Two-group profile: the top ⌈n·top%⌉ miners share ``held_pct`` percent equally,
    everyone else shares the remainder equally.

    Miner 0.. are the top group unless ``rng`` is given, in which case the
    assignment of miners to groups is shuffled.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < top_pct <= 50:
        raise ValueError(f"top share holders must be in (0, 50] percent, got {top_pct}")
    if not 0 < held_pct < 100:
        raise ValueError(f"held share must be in (0, 100) percent, got {held_pct}")
    n_top = math.ceil(n * top_pct / 100.0 - 1e-9)
    n_rest = n - n_top
    if n_top < 1 or n_rest < 1:
        raise ValueError(f"n={n}, top={top_pct}% leaves an empty group")
    held = held_pct / 100.0
    h = np.empty(n)
    h[:n_top] = held / n_top
    h[n_top:] = (1.0 - held) / n_rest
    if rng is not None:
        h = h[rng.generator.permutation(n)]
    h = h / h.sum()
    return HashPowerProfile(h, total_power)


def _resolve_p(rng: RandomSource | None, p: float | None) -> float:
    if p is None:
        if rng is None:
            raise ValueError("either rng or p is required")
        p = rng.uniform()
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    return p


def sample_block_time(rate: MiningRate, rng: RandomSource | None = None, *, p: float | None = None) -> float:
    """Inverse-CDF draw t = −ln(1−p)/λ."""
    return -math.log1p(-_resolve_p(rng, p)) / rate.lam


def sample_runnerup_time(
    rate: MiningRate, h_prev: float, rng: RandomSource | None = None, *, p: float | None = None
) -> float:
    """Solve time once miners holding ``h_prev`` of the power have left the race."""
    if not 0.0 <= h_prev < 1.0:
        raise ValueError(f"h_prev must lie in [0, 1), got {h_prev}")
    return -math.log1p(-_resolve_p(rng, p)) / (rate.lam * (1.0 - h_prev))


def winner_draw(profile: HashPowerProfile, rate: MiningRate, rng: RandomSource) -> tuple[int, float]:
    """First solver of an open race.

    Superposition form: the winner is categorical in h, the time is a single
    exponential at the aggregate rate λ.
    """
    gen = rng.generator
    winner = int(gen.choice(profile.n, p=profile.fractions))
    return winner, sample_block_time(rate, p=float(gen.random()))


class Timing(str, Enum):
    """How solve times inside one race relate to each other.

    QUANTILE: one uniform quantile p per race; finishing order is a size-biased
    permutation and the j-th finisher solves at −ln(1−p)/(μ·remaining power).
    POISSON: every miner has its own exponential clock at rate h_i·μ.
    AUTO: a configuration choice, resolved by the simulator (QUANTILE for
    zero-delay fault-free networks, POISSON otherwise). Quantile offsets
    assume every miner takes part in the race, which delays and partitions
    break.
    """

    QUANTILE = "quantile"
    POISSON = "poisson"
    AUTO = "auto"


def race_offsets(fractions: np.ndarray, rate_per_power: float, rng: RandomSource, timing: Timing) -> np.ndarray:
    """Per-miner solve offsets for one puzzle, measured from each miner's own start.

    ``rate_per_power`` is μ, the solve rate of one unit of hash power; the
    whole network solves at μ·Σh.
    """
    if timing is Timing.AUTO:
        raise ValueError("resolve Timing.AUTO before sampling a race")
    gen = rng.generator
    h = np.asarray(fractions, dtype=float)
    if timing is Timing.QUANTILE:
        p = float(gen.random())
        keys = np.log1p(-gen.random(h.size)) / h
        order = np.argsort(-keys, kind="stable")
        remaining = np.cumsum(h[order][::-1])[::-1]
        offsets = np.empty(h.size)
        offsets[order] = -math.log1p(-p) / (rate_per_power * remaining)
        return offsets
    return gen.standard_exponential(h.size) / (rate_per_power * h)
