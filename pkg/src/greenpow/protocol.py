"""Per-miner consensus state machines.

Green-PoW splits every epoch into two rounds. Blocks at even heights (FIRST)
come from an open race; the miners who solve that same puzzle after the
winner (runners-up) are the only ones allowed to mine the odd-height block
(SECOND). Everybody else, the winner included, idles in power-save mode
until the SECOND block arrives or the round times out, after which anyone
may mine it at first-round difficulty (SECOND_AFTER_TIMEOUT).

The functions here are pure: they take a ``MinerState`` and an input and
return the new state plus a tuple of emissions. The simulator owns message
delivery, block bookkeeping and energy accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Collection, NamedTuple

from .difficulty import Target

__all__ = [
    "AnnounceRunnerUp",
    "Block",
    "MinerState",
    "MintBlock",
    "Phase",
    "ProtocolParams",
    "Puzzle",
    "RaceKind",
    "RoundTag",
    "RunnerUpSet",
    "Selection",
    "SelectionKind",
    "SetTimer",
    "TimerKind",
    "Violation",
    "baseline_pow_step",
    "initial_state",
    "on_block_received",
    "on_eta_expired",
    "on_nonce_found",
    "on_runnerup_received",
    "on_timeout",
    "reanchor",
]


class Phase(str, Enum):
    MINING_R1 = "MINING_R1"
    CONTINUE_FOR_RUNNERUP = "CONTINUE_FOR_RUNNERUP"
    MINING_R2 = "MINING_R2"
    POWER_SAVE = "POWER_SAVE"


class RoundTag(str, Enum):
    GENESIS = "GENESIS"
    FIRST = "FIRST"
    SECOND = "SECOND"
    SECOND_AFTER_TIMEOUT = "SECOND_AFTER_TIMEOUT"
    POW = "POW"

    @property
    def closes_epoch(self) -> bool:
        return self in (RoundTag.SECOND, RoundTag.SECOND_AFTER_TIMEOUT)


class RaceKind(str, Enum):
    """Which puzzle a miner works on: the open race, the runner-up round, or the widened round after a timeout."""

    R1 = "R1"
    R2 = "R2"
    SAT = "SAT"


class Puzzle(NamedTuple):
    kind: RaceKind
    parent: int


@dataclass(frozen=True, slots=True)
class Block:
    id: int
    height: int
    round_tag: RoundTag
    producer: int
    parent: int
    found_at: float
    target_used: Target
    work: float
    cum_work: float

    @property
    def is_first(self) -> bool:
        return self.round_tag is RoundTag.FIRST


class SelectionKind(str, Enum):
    COUNT = "count"
    TIME_WINDOW = "time_window"
    ALL = "all"


@dataclass(frozen=True)
class Selection:
    """How the runner-up set is closed.

    COUNT(k): racers stop as soon as k runners-up are known.
    TIME_WINDOW(η): racers stop η after the first runner-up announcement.
    ALL: every non-winner is eligible at once, with no continuation race;
    this is the degenerate configuration that behaves like plain PoW.
    """

    kind: SelectionKind
    value: float = 0.0

    def __post_init__(self):
        kind = SelectionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SelectionKind.COUNT:
            if self.value != int(self.value) or self.value < 1:
                raise ValueError(f"COUNT(k) needs an integer k >= 1, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif kind is SelectionKind.TIME_WINDOW:
            if math.isnan(self.value) or self.value < 0:
                raise ValueError(f"eta must be >= 0, got {self.value}")

    @classmethod
    def count(cls, k: int) -> Selection:
        return cls(SelectionKind.COUNT, k)

    @classmethod
    def window(cls, eta: float) -> Selection:
        return cls(SelectionKind.TIME_WINDOW, float(eta))

    @classmethod
    def everyone(cls) -> Selection:
        return cls(SelectionKind.ALL)

    @property
    def k(self) -> int | None:
        return self.value if self.kind is SelectionKind.COUNT else None

    @property
    def eta(self) -> float | None:
        return self.value if self.kind is SelectionKind.TIME_WINDOW else None

    def label(self) -> str:
        if self.kind is SelectionKind.COUNT:
            return f"COUNT({self.value})"
        if self.kind is SelectionKind.TIME_WINDOW:
            return f"TIME_WINDOW({self.value:g})"
        return "ALL"


@dataclass(frozen=True)
class ProtocolParams:
    selection: Selection
    timeout: float = math.inf

    def __post_init__(self):
        if math.isnan(self.timeout) or self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def validate_against(self, expected_interval: float) -> None:
        """Reject a timeout that does not exceed the mean block time."""
        if self.timeout <= expected_interval:
            raise ValueError(
                f"timeout {self.timeout:g} must exceed the expected block interval {expected_interval:g}"
            )


@dataclass
class RunnerUpSet:
    """Runners-up known for one first-round race, keyed by miner with the time each solved."""

    epoch: int
    winner: int
    announce_times: dict[int, float]

    @property
    def members(self) -> frozenset[int]:
        return frozenset(m for m in self.announce_times if m != self.winner)

    def __contains__(self, miner: int) -> bool:
        return miner != self.winner and miner in self.announce_times

    def __len__(self) -> int:
        return len(self.announce_times) - (self.winner in self.announce_times)


class MinerState(NamedTuple):
    miner: int
    phase: Phase
    current_height: int
    chain_head: int
    puzzle: Puzzle | None
    is_runner_up: bool = False
    timed_out: bool = False
    timeout_deadline: float | None = None
    eta_deadline: float | None = None


class MintBlock(NamedTuple):
    height: int
    round_tag: RoundTag
    parent: int
    target: Target


class AnnounceRunnerUp(NamedTuple):
    miner: int
    first_block: int
    found_at: float


class TimerKind(str, Enum):
    TIMEOUT = "TIMEOUT"
    ETA = "ETA"


class SetTimer(NamedTuple):
    kind: TimerKind
    at: float
    first_block: int


class Violation(NamedTuple):
    block: int
    reason: str


def initial_state(miner: int, genesis: Block) -> MinerState:
    return MinerState(miner, Phase.MINING_R1, genesis.height + 1, genesis.id, Puzzle(RaceKind.R1, genesis.id))


def _next_epoch(state: MinerState, block_id: int, height: int) -> MinerState:
    return MinerState(state.miner, Phase.MINING_R1, height + 1, block_id, Puzzle(RaceKind.R1, block_id))


def _timer(first_block: int, now: float, params: ProtocolParams) -> tuple[float | None, tuple]:
    if math.isinf(params.timeout):
        return None, ()
    at = now + params.timeout
    return at, (SetTimer(TimerKind.TIMEOUT, at, first_block),)


def _stop_racing(state: MinerState) -> MinerState:
    return state._replace(phase=Phase.POWER_SAVE, puzzle=None, eta_deadline=None)


def _apply_closure(state: MinerState, known: int, now: float, params: ProtocolParams):
    """Closure check for a racer that knows ``known`` runners-up."""
    if state.phase is not Phase.CONTINUE_FOR_RUNNERUP or known == 0:
        return state, ()
    sel = params.selection
    if sel.kind is SelectionKind.COUNT:
        return (_stop_racing(state), ()) if known >= sel.value else (state, ())
    if sel.kind is SelectionKind.TIME_WINDOW:
        if state.eta_deadline is not None:
            return state, ()
        if sel.value == 0:
            return _stop_racing(state), ()
        at = now + sel.value
        if math.isinf(at):
            return state._replace(eta_deadline=at), ()
        return state._replace(eta_deadline=at), (SetTimer(TimerKind.ETA, at, state.chain_head),)
    return state, ()


def on_nonce_found(state: MinerState, now: float, params: ProtocolParams, block_id: int):
    """The miner solved the puzzle it is working on.

    ``block_id`` is the id the simulator will give a block minted here.
    Returns (state', emissions).
    """
    phase = state.phase
    if phase is Phase.POWER_SAVE or state.puzzle is None:
        raise AssertionError(f"miner {state.miner} found a nonce while not mining")
    if phase is Phase.MINING_R1:
        mint = MintBlock(state.current_height, RoundTag.FIRST, state.chain_head, Target.D1)
        deadline, timers = _timer(block_id, now, params)
        new = MinerState(
            state.miner, Phase.POWER_SAVE, state.current_height + 1, block_id, None, timeout_deadline=deadline
        )
        return new, (mint, *timers)
    if phase is Phase.CONTINUE_FOR_RUNNERUP:
        if state.eta_deadline is not None and now > state.eta_deadline:
            return _stop_racing(state), ()
        new = state._replace(
            phase=Phase.MINING_R2, is_runner_up=True, eta_deadline=None, puzzle=Puzzle(RaceKind.R2, state.chain_head)
        )
        return new, (AnnounceRunnerUp(state.miner, state.chain_head, now),)
    # MINING_R2: runners-up mine at D2, anyone resumed after a timeout at D1
    if state.is_runner_up and state.puzzle.kind is RaceKind.R2:
        mint = MintBlock(state.current_height, RoundTag.SECOND, state.chain_head, Target.D2)
    else:
        mint = MintBlock(state.current_height, RoundTag.SECOND_AFTER_TIMEOUT, state.chain_head, Target.D1)
    return _next_epoch(state, block_id, state.current_height), (mint,)


def on_block_received(
    state: MinerState,
    block: Block,
    runner_up_set: Collection[int],
    now: float,
    params: ProtocolParams,
):
    """A block extending this miner's chain head arrived.

    ``runner_up_set`` holds the runners-up this miner knows for the race that
    produced its current FIRST block (winner excluded); for a FIRST block it
    is the set already known for that block's race. Returns
    (state', accepted, emissions).
    """
    if block.parent != state.chain_head:
        raise ValueError("block does not extend the chain head; fork handling belongs to the simulator")
    if block.height != state.current_height:
        return state, False, ()
    tag = block.round_tag
    if tag is RoundTag.FIRST and state.phase is Phase.MINING_R1:
        deadline, timers = _timer(block.id, now, params)
        if params.selection.kind is SelectionKind.ALL:
            new = MinerState(
                state.miner, Phase.MINING_R2, state.current_height + 1, block.id,
                Puzzle(RaceKind.R2, block.id), is_runner_up=True, timeout_deadline=deadline,
            )
            return new, True, timers
        new = MinerState(
            state.miner, Phase.CONTINUE_FOR_RUNNERUP, state.current_height + 1, block.id,
            state.puzzle, timeout_deadline=deadline,
        )
        new, more = _apply_closure(new, len(runner_up_set), now, params)
        return new, True, (*timers, *more)
    if tag.closes_epoch and state.phase is not Phase.MINING_R1:
        if tag is RoundTag.SECOND:
            ok = block.target_used is Target.D2 and block.producer in runner_up_set
        else:
            late = state.timed_out or (state.timeout_deadline is not None and now >= state.timeout_deadline)
            ok = block.target_used is Target.D1 and late
        if ok:
            return _next_epoch(state, block.id, block.height), True, ()
        return state, False, (Violation(block.id, f"{tag.value} block from miner {block.producer} not eligible"),)
    return state, False, ()


def on_runnerup_received(state: MinerState, known_runnerups: int, params: ProtocolParams, now: float):
    """A runner-up announcement for this miner's current race arrived.

    ``known_runnerups`` is the size of the miner's runner-up set after adding
    the announcement. Only racers react; everybody else just records the
    member (done by the caller). Returns (state', emissions).
    """
    return _apply_closure(state, known_runnerups, now, params)


def on_eta_expired(state: MinerState, now: float):
    if (
        state.phase is Phase.CONTINUE_FOR_RUNNERUP
        and state.eta_deadline is not None
        and now >= state.eta_deadline
    ):
        return _stop_racing(state)
    return state


def on_timeout(state: MinerState, now: float, first_block: int) -> MinerState:
    """Second-round deadline for the epoch opened by ``first_block``.

    Idle miners and racers still chasing a runner-up slot give up and move
    to the widened puzzle at D1. Runners-up keep their second-round puzzle
    and only remember that the deadline passed. Timers from an epoch the
    miner has already left are ignored.
    """
    if state.chain_head != first_block or state.phase is Phase.MINING_R1 or state.timed_out:
        return state
    if state.timeout_deadline is not None and now < state.timeout_deadline:
        return state
    if state.phase in (Phase.POWER_SAVE, Phase.CONTINUE_FOR_RUNNERUP):
        return state._replace(
            phase=Phase.MINING_R2, timed_out=True, puzzle=Puzzle(RaceKind.SAT, first_block), eta_deadline=None
        )
    return state._replace(timed_out=True)


def reanchor(
    state: MinerState,
    tip: Block,
    now: float,
    params: ProtocolParams,
    *,
    solved_race: bool = False,
    known_runnerups: int = 0,
):
    """Move a miner onto a different chain tip after a fork switch.

    For a FIRST tip the miner becomes a runner-up if it already holds a
    solution of that race (``solved_race``), keeps racing if it is still
    working on the same puzzle, and idles otherwise. Returns (state', emissions).
    """
    if not tip.is_first:
        return _next_epoch(state, tip.id, tip.height), ()
    deadline, timers = _timer(tip.id, now, params)
    base = MinerState(state.miner, Phase.POWER_SAVE, tip.height + 1, tip.id, None, timeout_deadline=deadline)
    if tip.producer == state.miner:
        return base, timers
    if solved_race or params.selection.kind is SelectionKind.ALL:
        new = base._replace(phase=Phase.MINING_R2, is_runner_up=True, puzzle=Puzzle(RaceKind.R2, tip.id))
        return new, timers
    if state.puzzle == Puzzle(RaceKind.R1, tip.parent):
        racing = base._replace(phase=Phase.CONTINUE_FOR_RUNNERUP, puzzle=state.puzzle)
        racing, more = _apply_closure(racing, known_runnerups, now, params)
        return racing, (*timers, *more)
    return base, timers


def baseline_pow_step(state: MinerState, event: tuple, now: float = 0.0):
    """Classic PoW loop: mine, publish on success, switch to any better block.

    ``event`` is ``("nonce", block_id)`` or ``("block", Block)``.
    Returns (state', emissions).
    """
    kind, payload = event
    if kind == "nonce":
        mint = MintBlock(state.current_height, RoundTag.POW, state.chain_head, Target.D1)
        return _next_epoch(state, payload, state.current_height), (mint,)
    if kind == "block":
        return _next_epoch(state, payload.id, payload.height), ()
    raise ValueError(f"unknown PoW event {kind!r}")
