"""Run configuration shared by the simulator and the command line."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any

from .protocol import ProtocolParams, Selection, SelectionKind
from .stochastic import HashPowerProfile, RandomSource, Timing, build_power_profile

__all__ = [
    "Algorithm",
    "ConfigError",
    "DelaySpec",
    "Engine",
    "Partition",
    "PowerSpec",
    "Scenario",
    "SimConfig",
]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class Algorithm(str, Enum):
    POW = "pow"
    GREEN_POW = "green_pow"


class Engine(str, Enum):
    AUTO = "auto"
    EVENT = "event"
    EPOCH = "epoch"


@dataclass(frozen=True)
class PowerSpec:
    """Either the two-group concentration rule or explicit per-miner fractions."""

    top_pct: float = 50.0
    held_pct: float = 50.0
    fractions: tuple[float, ...] | None = None
    shuffle: bool = False

    def build(self, n: int, total_power: float = 1.0, rng: RandomSource | None = None) -> HashPowerProfile:
        if self.fractions is not None:
            if len(self.fractions) != n:
                raise ConfigError(f"power.fractions has {len(self.fractions)} entries for {n} miners", "power")
            return HashPowerProfile.from_weights(self.fractions, total_power)
        return build_power_profile(n, self.top_pct, self.held_pct, rng if self.shuffle else None, total_power)

    @property
    def is_uniform(self) -> bool:
        if self.fractions is not None:
            return len(set(self.fractions)) == 1
        return self.top_pct == self.held_pct


@dataclass(frozen=True)
class DelaySpec:
    kind: str = "zero"
    value: float = 0.0
    matrix: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "per_pair"):
            raise ConfigError(f"unknown delay model {self.kind!r}", "delay")
        if self.kind == "constant" and not (self.value >= 0 and math.isfinite(self.value)):
            raise ConfigError("constant delay must be a finite non-negative number", "delay")
        if self.kind == "per_pair":
            if self.matrix is None:
                raise ConfigError("per_pair delay needs a matrix", "delay")
            for row in self.matrix:
                if any(not (d >= 0 and math.isfinite(d)) for d in row):
                    raise ConfigError("delays must be finite and non-negative", "delay")

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "constant":
            return self.value == 0
        return all(d == 0 for row in self.matrix for d in row)


@dataclass(frozen=True)
class Partition:
    """Miners in ``members`` exchange no messages with the rest during [start, end)."""

    start: float
    end: float
    members: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if not self.end > self.start:
            raise ConfigError("partition must end after it starts", "partitions")

    def splits(self, a: int, b: int, now: float) -> bool:
        return self.start <= now < self.end and ((a in self.members) != (b in self.members))


@dataclass(frozen=True)
class Scenario:
    """Named fault injection.

    ``partition_runnerups`` isolates the full runner-up set of each listed
    epoch from the rest of the network as soon as the set is complete, for
    ``duration`` seconds (default: twice the timeout).
    """

    name: str
    epochs: tuple[int, ...] = (3,)
    duration: float | None = None

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.name!r}; valid: {', '.join(SCENARIOS)}", "scenario")
        object.__setattr__(self, "epochs", tuple(int(e) for e in self.epochs))
        if any(e < 0 for e in self.epochs):
            raise ConfigError("scenario epochs must be non-negative", "scenario")


SCENARIOS = ("partition_runnerups",)


@dataclass(frozen=True)
class SimConfig:
    algorithm: Algorithm = Algorithm.GREEN_POW
    miners: int = 100
    block_budget: int = 2000
    lam: float = 1.0 / 600.0
    power: PowerSpec = field(default_factory=PowerSpec)
    selection: Selection = field(default_factory=lambda: Selection.count(1))
    timeout: float = math.inf
    delay: DelaySpec = field(default_factory=DelaySpec)
    partitions: tuple[Partition, ...] = ()
    scenario: Scenario | None = None
    seed: int = 0
    replications: int = 1
    timing: Timing = Timing.AUTO
    window_blocks: int = 2016
    d2_init: str = "calibrated"
    total_power: float = 1.0
    engine: Engine = Engine.AUTO
    pilot_samples: int = 4000

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "timing", Timing(self.timing))
        object.__setattr__(self, "engine", Engine(self.engine))
        object.__setattr__(self, "partitions", tuple(self.partitions))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.miners, int) or self.miners < 2:
            raise ConfigError("miners must be an integer >= 2", "miners")
        if not isinstance(self.block_budget, int) or self.block_budget < 2:
            raise ConfigError("block_budget must be an integer >= 2", "block_budget")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError("lambda must be positive and finite", "lambda")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications must be >= 1", "replications")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer", "seed")
        if self.window_blocks < 1:
            raise ConfigError("window_blocks must be >= 1", "window_blocks")
        if self.d2_init not in ("calibrated", "minimum"):
            raise ConfigError("d2_init must be 'calibrated' or 'minimum'", "d2_init")
        if self.pilot_samples < 1:
            raise ConfigError("pilot_samples must be >= 1", "pilot_samples")
        if self.algorithm is Algorithm.GREEN_POW:
            try:
                ProtocolParams(self.selection, self.timeout).validate_against(1.0 / self.lam)
            except ValueError as exc:
                raise ConfigError(str(exc), "timeout") from None
        if self.delay.kind == "per_pair":
            m = self.delay.matrix
            if len(m) != self.miners or any(len(r) != self.miners for r in m):
                raise ConfigError("delay matrix must be miners x miners", "delay")
        for p in self.partitions:
            if any(not 0 <= x < self.miners for x in p.members):
                raise ConfigError("partition members out of range", "partitions")
        if self.scenario is not None:
            if self.algorithm is not Algorithm.GREEN_POW:
                raise ConfigError("scenarios apply to green_pow runs", "scenario")
            if math.isinf(self.timeout):
                raise ConfigError("partition scenarios need a finite timeout", "timeout")
            if self.selection.kind is not SelectionKind.COUNT:
                raise ConfigError("partition scenarios need count selection", "selection")
        try:
            self.profile()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), "power") from None

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.selection, self.timeout)

    def profile(self) -> HashPowerProfile:
        return self.power.build(self.miners, self.total_power, RandomSource(self.seed, 1))

    @property
    def needs_event_engine(self) -> bool:
        return not self.delay.is_zero or bool(self.partitions) or self.scenario is not None

    @property
    def race_timing(self) -> Timing:
        if self.timing is Timing.AUTO:
            return Timing.POISSON if self.needs_event_engine else Timing.QUANTILE
        return self.timing

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        sel = self.selection
        out: dict[str, Any] = {
            "algorithm": self.algorithm.value,
            "miners": self.miners,
            "block_budget": self.block_budget,
            "lambda": self.lam,
            "power": {k: v for k, v in asdict(self.power).items() if v is not None},
            "selection": {"mode": sel.kind.value}
            | ({"k": sel.value} if sel.kind is SelectionKind.COUNT else {})
            | ({"eta": _num_out(sel.value)} if sel.kind is SelectionKind.TIME_WINDOW else {}),
            "timeout": _num_out(self.timeout),
            "delay": {"kind": self.delay.kind, "value": self.delay.value}
            | ({"matrix": [list(r) for r in self.delay.matrix]} if self.delay.matrix is not None else {}),
            "partitions": [
                {"start": p.start, "end": p.end, "members": sorted(p.members)} for p in self.partitions
            ],
            "scenario": None
            if self.scenario is None
            else {"name": self.scenario.name, "epochs": list(self.scenario.epochs), "duration": self.scenario.duration},
            "seed": self.seed,
            "replications": self.replications,
            "timing": self.timing.value,
            "window_blocks": self.window_blocks,
            "d2_init": self.d2_init,
            "total_power": self.total_power,
            "engine": self.engine.value,
            "pilot_samples": self.pilot_samples,
        }
        if "fractions" in out["power"]:
            out["power"]["fractions"] = list(out["power"]["fractions"])
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimConfig:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)} | {"lambda"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key {unknown[0]!r}", unknown[0])
        kw: dict[str, Any] = {}
        for key, value in data.items():
            try:
                kw.update(_parse_field(key, value))
            except ConfigError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"{key}: {exc}", key) from None
        return cls(**kw)


def _num_out(x: float):
    return "inf" if math.isinf(x) else x


def _num_in(x) -> float:
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "none"):
        return math.inf
    if x is None:
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"expected a number, got {x!r}")
    return float(x)


def _int_in(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        if isinstance(x, float) and x.is_integer():
            return int(x)
        raise ValueError(f"expected an integer, got {x!r}")
    return x


def _parse_field(key: str, value) -> dict[str, Any]:
    if key in ("miners", "block_budget", "replications", "seed", "window_blocks", "pilot_samples"):
        return {key: _int_in(value)}
    if key == "lambda":
        return {"lam": _num_in(value)}
    if key in ("lam", "total_power"):
        return {key: _num_in(value)}
    if key == "timeout":
        return {"timeout": _num_in(value)}
    if key in ("algorithm", "timing", "engine", "d2_init"):
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return {key: value.lower()}
    if key == "power":
        if not isinstance(value, dict):
            raise ValueError("power must be an object")
        extra = set(value) - {"top_pct", "held_pct", "fractions", "shuffle"}
        if extra:
            raise ValueError(f"unknown power key {sorted(extra)[0]!r}")
        fr = value.get("fractions")
        return {
            "power": PowerSpec(
                top_pct=_num_in(value.get("top_pct", 50.0)),
                held_pct=_num_in(value.get("held_pct", 50.0)),
                fractions=None if fr is None else tuple(_num_in(x) for x in fr),
                shuffle=bool(value.get("shuffle", False)),
            )
        }
    if key == "selection":
        if not isinstance(value, dict) or "mode" not in value:
            raise ValueError("selection must be an object with a 'mode'")
        mode = str(value["mode"]).lower()
        if mode == "count":
            return {"selection": Selection.count(_int_in(value.get("k", 1)))}
        if mode in ("time_window", "window", "eta"):
            return {"selection": Selection.window(_num_in(value.get("eta", 0.0)))}
        if mode == "all":
            return {"selection": Selection.everyone()}
        raise ValueError(f"unknown selection mode {mode!r}")
    if key == "delay":
        if not isinstance(value, dict):
            raise ValueError("delay must be an object")
        m = value.get("matrix")
        return {
            "delay": DelaySpec(
                kind=str(value.get("kind", "zero")).lower(),
                value=_num_in(value.get("value", 0.0)),
                matrix=None if m is None else tuple(tuple(_num_in(x) for x in row) for row in m),
            )
        }
    if key == "partitions":
        return {
            "partitions": tuple(
                Partition(_num_in(p["start"]), _num_in(p["end"]), frozenset(_int_in(x) for x in p["members"]))
                for p in value
            )
        }
    if key == "scenario":
        if value is None:
            return {"scenario": None}
        if isinstance(value, str):
            return {"scenario": Scenario(value)}
        dur = value.get("duration")
        return {
            "scenario": Scenario(
                value["name"],
                tuple(_int_in(e) for e in value.get("epochs", (3,))),
                None if dur is None else _num_in(dur),
            )
        }
    raise ConfigError(f"unknown configuration key {key!r}", key)
