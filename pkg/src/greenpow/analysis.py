"""Post-hoc models and trace analytics: forks, censorship, shares, η and timeouts."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .config import Algorithm, PowerSpec, SimConfig
from .protocol import Selection
from .report import read_csv, write_csv
from .stochastic import MiningRate, RandomSource

__all__ = [
    "BlockTrace",
    "EtaPoint",
    "ShareRow",
    "TimeoutCurve",
    "UnawareForm",
    "UnawareModel",
    "censorship_window",
    "eta_study",
    "fork_probability",
    "longest_runs",
    "second_round_cdf",
    "share_redistribution",
    "timeout_curve",
]

# -- traces --------------------------------------------------------------------

TRACE_HEADER = ("height", "miner_id")
SHARE_HEADER = ("miner_id", "pow_share_pct", "greenpow_share_pct")


@dataclass(frozen=True)
class BlockTrace:
    """Canonical block producers in height order."""

    heights: tuple[int, ...]
    miners: tuple[str, ...]
    network: str = ""
    block_range: tuple[int, int] | None = None

    def __post_init__(self):
        if len(self.heights) != len(self.miners):
            raise ValueError("one miner per height is required")
        if not self.heights:
            raise ValueError("empty block trace")
        for i in range(1, len(self.heights)):
            if self.heights[i] != self.heights[i - 1] + 1:
                raise ValueError(f"heights must be contiguous and increasing (at {self.heights[i]})")
        for h, m in zip(self.heights, self.miners):
            if not isinstance(m, str) or not m.strip():
                raise ValueError(f"empty miner_id at height {h}")
        if self.block_range is None:
            object.__setattr__(self, "block_range", (self.heights[0], self.heights[-1]))

    def __len__(self) -> int:
        return len(self.heights)

    @classmethod
    def from_miners(cls, miners: Iterable, start: int = 0, network: str = "") -> BlockTrace:
        ms = tuple(str(m) for m in miners)
        return cls(tuple(range(start, start + len(ms))), ms, network)

    @classmethod
    def from_csv(cls, path, network: str = "") -> BlockTrace:
        rows = read_csv(path, TRACE_HEADER)
        heights = []
        for i, r in enumerate(rows, start=2):
            try:
                heights.append(int(r["height"]))
            except ValueError:
                raise ValueError(f"{path}:{i}: height {r['height']!r} is not an integer") from None
        return cls(tuple(heights), tuple(r["miner_id"] for r in rows), network or Path(path).stem)

    @classmethod
    def from_report(cls, report) -> BlockTrace:
        return cls(
            tuple(b.height for b in report.chain),
            tuple(str(b.producer) for b in report.chain),
            report.config.algorithm.value,
        )

    def to_csv(self, path) -> None:
        write_csv(path, TRACE_HEADER, zip(self.heights, self.miners))

    def counts(self) -> Counter:
        return Counter(self.miners)


def longest_runs(trace: BlockTrace) -> dict[str, int]:
    """Longest streak of consecutive blocks for every miner in the trace."""
    best: dict[str, int] = {}
    prev, run = None, 0
    for m in trace.miners:
        run = run + 1 if m == prev else 1
        prev = m
        if run > best.get(m, 0):
            best[m] = run
    return best


# -- fork model ------------------------------------------------------------------


class UnawareForm(str, Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"
    STEP = "step"
    CUSTOM = "custom"


@dataclass(frozen=True)
class UnawareModel:
    """Fraction u(t) of miners that have not yet heard of a block t seconds after it was found.

    EXPONENTIAL(τ): e^(−t/τ); LINEAR(T): 1 − t/T on [0, T]; STEP(T): 1 on [0, T).
    CUSTOM takes any non-increasing ``func`` with u(0) = 1 and a finite integral.
    """

    form: UnawareForm
    scale: float = 2.0
    func: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "form", UnawareForm(self.form))
        if self.form is UnawareForm.CUSTOM:
            if self.func is None:
                raise ValueError("a custom model needs func")
            if not math.isclose(self.func(0.0), 1.0, abs_tol=1e-12):
                raise ValueError("u(0) must be 1")
            grid = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, 400)))
            vals = np.array([self.func(t) for t in grid])
            if np.any(np.diff(vals) > 1e-12) or np.any(vals < 0):
                raise ValueError("u(t) must be non-negative and non-increasing")
        elif not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ValueError("propagation time constant must be finite and non-negative")

    def u(self, t: float) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        if self.form is UnawareForm.CUSTOM:
            return float(self.func(t))
        if self.scale == 0:
            return 1.0 if t == 0 else 0.0
        if self.form is UnawareForm.EXPONENTIAL:
            return math.exp(-t / self.scale)
        if self.form is UnawareForm.LINEAR:
            return max(0.0, 1.0 - t / self.scale)
        return 1.0 if t < self.scale else 0.0

    def integral(self) -> float:
        """∫₀^∞ u(t) dt: closed form for the built-in shapes, adaptive quadrature otherwise."""
        if self.form is UnawareForm.EXPONENTIAL:
            return self.scale
        if self.form is UnawareForm.LINEAR:
            return self.scale / 2.0
        if self.form is UnawareForm.STEP:
            return self.scale
        value, _err = integrate.quad(self.func, 0.0, math.inf, epsrel=1e-10, epsabs=0.0, limit=500)
        if not math.isfinite(value):
            raise ValueError("u(t) has no finite integral")
        return value


def fork_probability(model: UnawareModel, p_b: float) -> float:
    """Probability that a block is forked: 1 − (1 − P_b)^∫u.

    ``p_b`` is the probability that the rest of the network solves within one
    unit of the time scale used for u (λ·1 s for seconds).
    """
    if not 0.0 <= p_b < 1.0:
        raise ValueError("p_b must lie in [0, 1)")
    return -math.expm1(model.integral() * math.log1p(-p_b))


# -- censorship ------------------------------------------------------------------


def censorship_window(
    k: int,
    rate: MiningRate,
    algorithm: Algorithm | str = Algorithm.POW,
    trace: BlockTrace | None = None,
    attacker: str | int | None = None,
) -> float:
    """Time an attacker holding block production can exclude a transaction.

    Under PoW an attacker that wins k blocks in a row censors for k/λ. Under
    Green-PoW a first-round winner sits out the second round, so the window
    is capped by the longest streak the attacker actually achieved in
    ``trace`` (the longest streak of any miner when ``attacker`` is None).
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError("k must be a positive integer")
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.POW:
        return k / rate.lam
    if trace is None:
        raise ValueError("green_pow censorship needs a simulated trace")
    runs = longest_runs(trace)
    longest = runs.get(str(attacker), 0) if attacker is not None else max(runs.values())
    return min(k, longest) / rate.lam


# -- share redistribution -----------------------------------------------------------


class ShareRow(NamedTuple):
    miner_id: str
    pow_share_pct: float
    greenpow_share_pct: float


def _run_removals(miners: Sequence[str], gen: np.random.Generator, p: float) -> Counter:
    removed: Counter = Counter()
    i, n = 0, len(miners)
    while i < n:
        j = i
        while j + 1 < n and miners[j + 1] == miners[i]:
            j += 1
        length = j - i + 1
        if length >= 2:
            # excess beyond a pair goes deterministically, the pair itself is a coin flip
            removed[miners[i]] += length - 2 + (1 if gen.random() < p else 0)
        i = j + 1
    return removed


def share_redistribution(
    trace: BlockTrace,
    rng: RandomSource,
    *,
    redistribute: str = "proportional",
    p: float = 0.5,
) -> list[ShareRow]:
    """PoW shares of ``trace`` next to the shares Green-PoW's exclusion rule would leave.

    Each streak of two blocks by one miner loses one block with probability
    ``p`` (half of such pairs are a first-round win followed by a
    second-round win, which the rule forbids); longer streaks are cut to a
    pair first. Removed blocks go to the other miners, proportionally to
    their block counts or uniformly. Rows are sorted ascending by PoW share.
    """
    if redistribute not in ("proportional", "uniform"):
        raise ValueError("redistribute must be 'proportional' or 'uniform'")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    counts = trace.counts()
    if len(counts) < 2:
        raise ValueError("redistribution needs at least two distinct miners")
    ids = sorted(counts, key=lambda m: (counts[m], m))
    base = np.array([counts[m] for m in ids], dtype=float)
    total = base.sum()
    index = {m: i for i, m in enumerate(ids)}
    adjusted = base.copy()
    for miner, r in sorted(_run_removals(trace.miners, rng.generator, p).items()):
        if r == 0:
            continue
        i = index[miner]
        weights = base.copy() if redistribute == "proportional" else np.ones_like(base)
        weights[i] = 0.0
        adjusted[i] -= r
        adjusted += r * weights / weights.sum()
    pow_pct = base / total * 100.0
    green_pct = adjusted / adjusted.sum() * 100.0
    return [ShareRow(m, float(a), float(b)) for m, a, b in zip(ids, pow_pct, green_pct)]


def write_share_table(rows: Sequence[ShareRow], path) -> None:
    write_csv(path, SHARE_HEADER, rows)


# -- η and timeout studies ------------------------------------------------------------


class EtaPoint(NamedTuple):
    miners: int
    k: int
    distribution: str
    mean_eta_s: float
    mean_eta_min: float
    epochs: int


_DISTRIBUTIONS = {
    "uniform": PowerSpec(50.0, 50.0),
    "nonuniform": PowerSpec(5.0, 50.0),
}


def power_distribution(name: str | PowerSpec) -> PowerSpec:
    if isinstance(name, PowerSpec):
        return name
    try:
        return _DISTRIBUTIONS[name.replace("-", "").replace("_", "").lower()]
    except KeyError:
        raise ValueError(f"unknown distribution {name!r}; valid: {', '.join(_DISTRIBUTIONS)}") from None


def eta_study(
    ks: Iterable[int],
    *,
    miners: int = 200,
    distribution: str | PowerSpec = "uniform",
    epochs: int = 10_000,
    lam: float = 1.0 / 600.0,
    seed: int = 0,
) -> list[EtaPoint]:
    """Mean time between the first and the k-th runner-up announcement, per k."""
    spec = power_distribution(distribution)
    label = distribution if isinstance(distribution, str) else "custom"
    from .simnet import run_simulation

    out = []
    for k in ks:
        cfg = SimConfig(
            miners=miners,
            block_budget=2 * epochs,
            lam=lam,
            power=spec,
            selection=Selection.count(int(k)),
            seed=seed,
        )
        report = run_simulation(cfg)
        etas = [e.eta if e.eta is not None else 0.0 for e in report.epochs]
        mean = float(np.mean(etas))
        out.append(EtaPoint(miners, int(k), label, mean, mean / 60.0, len(etas)))
    return out


class TimeoutCurve(NamedTuple):
    points: list[tuple[float, float]]
    band: tuple[float, float]


def second_round_cdf(rate: MiningRate, t: float) -> float:
    """Probability that a second-round block is found within ``t``: 1 − e^(−λt)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return -math.expm1(-rate.lam * t)


def timeout_curve(
    rate: MiningRate, probabilities: Iterable[float], band: tuple[float, float] = (0.7, 0.9)
) -> TimeoutCurve:
    """Wait t = −ln(1 − p)/λ after which the second round has produced a block with probability p."""

    def wait(p: float) -> float:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"probability {p} outside [0, 1)")
        return -math.log1p(-p) / rate.lam

    pts = [(float(p), wait(float(p))) for p in probabilities]
    return TimeoutCurve(pts, (wait(band[0]), wait(band[1])))
