"""Deterministic simulation of a mining network.

Two engines share the race schedules, block bookkeeping and reporting:

``EventSimulator``
    A discrete-event loop over per-miner state machines with message
    delays, partitions, forks and fork resolution.
``EpochSimulator``
    A closed-loop walk over epochs for zero-delay networks without faults,
    where every miner sees every message at the instant it is sent. It
    produces the same trace as the event engine for such networks and is
    much faster, so large sweeps use it.

Race schedules come from substreams keyed by (replication, race kind,
parent block id), which is what makes the two engines agree draw for draw.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import protocol as proto
from .config import Algorithm, DelaySpec, Engine, Partition, SimConfig
from .difficulty import DifficultyState, RetargetRecord, Target, advance
from .energy import EnergyLedger
from .protocol import (
    AnnounceRunnerUp,
    Block,
    MintBlock,
    Phase,
    Puzzle,
    RaceKind,
    RoundTag,
    RunnerUpSet,
    SelectionKind,
    SetTimer,
    TimerKind,
    Violation,
)
from .report import EpochRecord, ForkRecord, SimReport
from .stochastic import HashPowerProfile, RandomSource, Timing, race_offsets

__all__ = [
    "ChainView",
    "EpochSimulator",
    "EventSimulator",
    "SimulationDeadlock",
    "TopologyModel",
    "calibrate_d2",
    "chain_key",
    "deliver",
    "resolve_forks",
    "run_replications",
    "run_simulation",
]

GENESIS = Block(0, -1, RoundTag.GENESIS, -1, -1, 0.0, Target.D1, 0.0, 0.0)

_RACE_CODE = {RaceKind.R1: 1, RaceKind.R2: 2, RaceKind.SAT: 3}


class SimulationDeadlock(RuntimeError):
    pass


# -- chain selection -----------------------------------------------------------


def chain_key(block: Block) -> tuple[float, float, int]:
    """Sort key of a tip: more cumulative work wins, then the lower (found_at, producer)."""
    return (block.cum_work, -block.found_at, -block.producer)


@dataclass
class ChainView:
    blocks: dict[int, Block]
    heads: set[int]
    canonical_head: int

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block]) -> ChainView:
        by_id = {b.id: b for b in blocks}
        parents = {b.parent for b in by_id.values()}
        for b in by_id.values():
            if b.round_tag is not RoundTag.GENESIS and b.parent not in by_id:
                raise ValueError(f"block {b.id} references unknown parent {b.parent}")
        heads = {i for i in by_id if i not in parents}
        view = cls(by_id, heads, -1)
        view.canonical_head = resolve_forks(view)
        return view

    def chain(self, head: int | None = None) -> list[Block]:
        """Blocks from genesis (excluded) up to ``head``."""
        out = []
        b = self.blocks[self.canonical_head if head is None else head]
        while b.round_tag is not RoundTag.GENESIS:
            out.append(b)
            b = self.blocks[b.parent]
        return out[::-1]


def resolve_forks(view: ChainView) -> int:
    """Tip with maximal cumulative expected work; ties go to the lowest (found_at, producer)."""
    if not view.heads:
        raise ValueError("empty chain view")
    return max(view.heads, key=lambda i: chain_key(view.blocks[i]))


# -- network -----------------------------------------------------------------


@dataclass(frozen=True)
class TopologyModel:
    delay: DelaySpec
    partitions: tuple[Partition, ...] = ()

    def delay_between(self, a: int, b: int) -> float:
        d = self.delay
        if d.kind == "zero":
            return 0.0
        if d.kind == "constant":
            return d.value
        return d.matrix[a][b]

    def reachable(self, a: int, b: int, now: float, extra: Iterable[Partition] = ()) -> bool:
        for p in self.partitions:
            if p.splits(a, b, now):
                return False
        for p in extra:
            if p.splits(a, b, now):
                return False
        return True


def deliver(
    sender: int, peers: Iterable[int], now: float, topology: TopologyModel, extra: Iterable[Partition] = ()
) -> list[tuple[float, tuple[int, ...]]]:
    """Arrival schedule of one broadcast: (arrival time, recipients) groups in time order.

    Peers cut off by a partition at send time get nothing; there is no replay.
    """
    extra = tuple(extra)
    groups: dict[float, list[int]] = {}
    for r in peers:
        if r == sender or not topology.reachable(sender, r, now, extra):
            continue
        groups.setdefault(now + topology.delay_between(sender, r), []).append(r)
    return [(t, tuple(rs)) for t, rs in sorted(groups.items())]


# -- calibration ---------------------------------------------------------------


def calibrate_d2(
    profile: HashPowerProfile, selection: proto.Selection, timing: Timing, lam: float, rng: RandomSource, samples: int
) -> float:
    """Second-round difficulty that makes the expected second-round solve time T_E.

    With runner-up power S the round solves at λ·S/d2, so the target needs
    d2 = 1/E[1/S]. S is sampled from zero-delay pilot races unless every
    miner has the same power and the set size is fixed.
    """
    h = profile.fractions
    n = h.size
    if selection.kind is SelectionKind.COUNT and np.all(h == h[0]):
        return min(selection.value, n - 1) * float(h[0])
    inv = np.empty(samples)
    for i in range(samples):
        off = race_offsets(h, lam, rng, timing)
        order = np.argsort(off, kind="stable")
        w = order[0]
        if selection.kind is SelectionKind.ALL:
            s = 1.0 - h[w]
        elif selection.kind is SelectionKind.COUNT:
            s = float(h[order[1 : 1 + selection.value]].sum())
        else:
            first = off[order[1]]
            rest = order[1:]
            s = float(h[rest[off[rest] <= first + selection.value]].sum())
        inv[i] = 1.0 / s
    return float(1.0 / inv.mean())


# -- shared machinery -----------------------------------------------------------


class _Base:
    def __init__(self, config: SimConfig, replication: int = 0):
        self.cfg = config
        self.replication = replication
        self.green = config.algorithm is Algorithm.GREEN_POW
        self.timing = config.race_timing
        self.profile = config.profile()
        self.h = self.profile.fractions
        self.hl = self.h.tolist()
        self.n = self.profile.n
        self.P = self.profile.total_power
        self.lam = config.lam
        self.params = config.params
        self.sel = config.selection
        self.budget = config.block_budget
        self.rng = RandomSource(config.seed, 0).substream(replication)
        d2 = 1.0
        if self.green:
            if config.d2_init == "minimum":
                d2 = float(self.h.min())
            else:
                d2 = calibrate_d2(
                    self.profile, self.sel, config.race_timing, self.lam,
                    RandomSource(config.seed, 2).substream(replication), config.pilot_samples,
                )
        self.d2_initial = d2
        self.blocks: list[Block] = [GENESIS]
        self.diff: list[DifficultyState] = [
            DifficultyState(1.0, d2, config.window_blocks, 1.0 / config.lam)
        ]
        self.retarget_of: list[RetargetRecord | None] = [None]
        self.ledger = EnergyLedger(self.n, self.P)
        self.announcements: dict[int, dict[int, float]] = {}
        self.timeouts_fired: set[int] = set()
        self.violations: set[int] = set()
        self._offsets: dict[Puzzle, np.ndarray] = {}
        self.best = GENESIS
        self.now = 0.0

    # races and blocks

    def offsets(self, puzzle: Puzzle) -> np.ndarray:
        off = self._offsets.get(puzzle)
        if off is None:
            state = self.diff[puzzle.parent]
            stream = self.rng.substream(_RACE_CODE[puzzle.kind], puzzle.parent)
            if puzzle.kind is RaceKind.R1:
                off = race_offsets(self.h, self.lam / state.d1, stream, self.timing)
            elif puzzle.kind is RaceKind.R2:
                off = race_offsets(self.h, self.lam / state.d2, stream, Timing.POISSON)
            else:
                off = race_offsets(self.h, self.lam / state.d1, stream, Timing.POISSON)
            self._offsets[puzzle] = off
        return off

    def forget_races_below(self, height: int) -> None:
        stale = [p for p in self._offsets if self.blocks[p.parent].height < height]
        for p in stale:
            del self._offsets[p]

    def mint(self, mint: MintBlock, producer: int, now: float) -> Block:
        now = float(now)
        parent = self.blocks[mint.parent]
        state = self.diff[parent.id]
        work = state.difficulty(mint.target)
        new_state, record = advance(state, mint.target, now - parent.found_at)
        b = Block(len(self.blocks), mint.height, mint.round_tag, producer, parent.id, now, mint.target, work,
                  parent.cum_work + work)
        self.blocks.append(b)
        self.diff.append(new_state)
        self.retarget_of.append(record)
        if chain_key(b) > chain_key(self.best):
            self.best = b
        return b

    @property
    def finished(self) -> bool:
        return self.best.height >= self.budget - 1

    def accrue(self, miner: int, puzzle: Puzzle, start: float, end: float) -> None:
        height = self.blocks[puzzle.parent].height + 1
        self.ledger.integrate(miner, self.hl[miner], end - start, height // 2, 1 + height % 2)

    # report

    def report(self, engine: str) -> SimReport:
        view_chain = []
        b = self.best
        while b.round_tag is not RoundTag.GENESIS:
            view_chain.append(b)
            b = self.blocks[b.parent]
        chain = [x for x in view_chain[::-1] if x.height < self.budget]
        by_height: dict[int, list[int]] = {}
        for x in self.blocks[1:]:
            if x.height < self.budget:
                by_height.setdefault(x.height, []).append(x.id)
        forks = []
        for height, ids in sorted(by_height.items()):
            if len(ids) > 1:
                win = chain[height].id if height < len(chain) else None
                tag = self._height_tag(height)
                forks.append(ForkRecord(height, tuple(ids), win, tag))
        epochs = []
        for i in range(len(chain) // 2):
            f, s = chain[2 * i], chain[2 * i + 1]
            start = self.blocks[f.parent].found_at
            if self.green:
                anns = self.announcements.get(f.parent, {})
                runners = tuple(sorted(((m, t) for m, t in anns.items() if m != f.producer), key=lambda x: (x[1], x[0])))
                count = self.n - 1 if self.sel.kind is SelectionKind.ALL else len(runners)
            else:
                runners, count = (), 0
            e1, e2 = self.ledger.epoch(i)
            epochs.append(
                EpochRecord(
                    epoch=i,
                    first_block=f.id,
                    second_block=s.id,
                    winner=f.producer,
                    second_producer=s.producer,
                    second_tag=s.round_tag,
                    started_at=start,
                    first_at=f.found_at,
                    second_at=s.found_at,
                    runnerups=runners,
                    runnerup_count=count,
                    timed_out=s.round_tag is RoundTag.SECOND_AFTER_TIMEOUT,
                    e_1st=e1,
                    e_2nd=e2,
                    e_pow_equiv=self.P * (s.found_at - start),
                )
            )
        retargets = [self.retarget_of[x.id] for x in chain if self.retarget_of[x.id] is not None]
        canon_firsts = {x.id for x in chain if x.is_first}
        return SimReport(
            config=self.cfg,
            replication=self.replication,
            engine=engine,
            chain=chain,
            blocks_produced=len(self.blocks) - 1,
            forks=forks,
            epochs=epochs,
            ledger=self.ledger,
            retargets=retargets,
            timeout_count=len(self.timeouts_fired & canon_firsts),
            violation_count=len(self.violations),
            end_time=self.now,
            d2_initial=self.d2_initial,
            profile=self.profile,
        )

    def _height_tag(self, height: int) -> str:
        if not self.green:
            return RoundTag.POW.value
        return RoundTag.FIRST.value if height % 2 == 0 else RoundTag.SECOND.value


# -- event engine --------------------------------------------------------------

_NONCE, _BLOCK, _ANNOUNCE, _TIMEOUT, _ETA = range(5)
EVENT_KINDS = {
    _NONCE: "NONCE_FOUND",
    _BLOCK: "BLOCK_DELIVERY",
    _ANNOUNCE: "RUNNERUP_DELIVERY",
    _TIMEOUT: "TIMEOUT_EXPIRY",
    _ETA: "ETA_EXPIRY",
}


class _AllBut:
    """Runner-up set of the ALL selection mode: everybody except the winner."""

    __slots__ = ("winner", "n")

    def __init__(self, winner: int, n: int):
        self.winner, self.n = winner, n

    def __contains__(self, m) -> bool:
        return m != self.winner

    def __len__(self) -> int:
        return self.n - 1


class EventSimulator(_Base):
    """Event loop over per-miner state machines; events pop in (time, seq) order."""

    def __init__(self, config: SimConfig, replication: int = 0, trace: list | None = None):
        super().__init__(config, replication)
        self.topology = TopologyModel(config.delay, config.partitions)
        self.dynamic_partitions: list[Partition] = []
        self.queue: list[tuple] = []
        self.seq = 0
        self.trace = trace
        n = self.n
        self.state = [proto.initial_state(m, GENESIS) for m in range(n)]
        self.assigned: list[Puzzle | None] = [None] * n
        self.started = [0.0] * n
        self.token = [0] * n
        self.known = [(1 << n) - 1]
        self.deferred: list[set[int]] = [set() for _ in range(n)]
        self.members: list[dict[int, dict[int, float]]] = [{} for _ in range(n)]
        self.solved: list[dict[int, float]] = [{} for _ in range(n)]
        self.others = [tuple(r for r in range(n) if r != m) for m in range(n)]
        self._scenario_slots: dict[int, int] = {}
        self._prune_at = 64

    # queue

    def _push(self, at: float, kind: int, a, b) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (at, self.seq, kind, a, b))

    def run(self) -> SimReport:
        for m in range(self.n):
            self._sync(m, 0.0)
        handlers = {
            _NONCE: self._on_nonce,
            _BLOCK: self._on_block,
            _ANNOUNCE: self._on_announce,
            _TIMEOUT: self._on_timeout,
            _ETA: self._on_eta,
        }
        queue = self.queue
        while queue and not self.finished:
            at, seq, kind, a, b = heapq.heappop(queue)
            self.now = at
            if self.trace is not None:
                self.trace.append((at, seq, EVENT_KINDS[kind], a if kind != _BLOCK else len(a), b))
            handlers[kind](a, b, at)
        if not self.finished:
            phases = {}
            for s in self.state:
                phases[s.phase.value] = phases.get(s.phase.value, 0) + 1
            raise SimulationDeadlock(
                f"no events left at t={self.now:.6g} with best height {self.best.height} "
                f"of {self.budget}; miner phases {phases}"
            )
        for m in range(self.n):
            if self.assigned[m] is not None:
                self.accrue(m, self.assigned[m], self.started[m], self.now)
                self.started[m] = self.now
        return self.report("event")

    # bookkeeping

    def _sync(self, m: int, now: float) -> None:
        want = self.state[m].puzzle
        cur = self.assigned[m]
        if want == cur:
            return
        if cur is not None:
            self.accrue(m, cur, self.started[m], now)
        self.assigned[m] = want
        self.token[m] += 1
        if want is not None:
            self.started[m] = now
            at = now + float(self.offsets(want)[m])
            if math.isfinite(at):
                self._push(at, _NONCE, m, self.token[m])

    def _broadcast(self, sender: int, kind: int, payload, now: float) -> None:
        if self.cfg.delay.kind == "zero" and not self.topology.partitions and not self.dynamic_partitions:
            self._push(now, kind, self.others[sender], payload)
            return
        for at, group in deliver(sender, self.others[sender], now, self.topology, self.dynamic_partitions):
            self._push(at, kind, group, payload)

    def _runner_set(self, m: int, first: Block):
        if self.sel.kind is SelectionKind.ALL:
            return _AllBut(first.producer, self.n)
        return RunnerUpSet(first.height // 2, first.producer, self.members[m].get(first.parent, {}))

    def _emit(self, m: int, emissions, now: float) -> None:
        for e in emissions:
            if isinstance(e, MintBlock):
                b = self.mint(e, m, now)
                self.known.append(1 << m)
                if b.is_first:
                    self.solved[m].setdefault(b.parent, now)
                if b.height >= self._prune_at:
                    self._prune(b.height)
                if self.finished:
                    return
                self._broadcast(m, _BLOCK, b.id, now)
            elif isinstance(e, AnnounceRunnerUp):
                race = self.blocks[e.first_block].parent
                self.solved[m].setdefault(race, e.found_at)
                self.announcements.setdefault(race, {}).setdefault(m, e.found_at)
                self.members[m].setdefault(race, {})[m] = e.found_at
                self._broadcast(m, _ANNOUNCE, (m, race, e.first_block, e.found_at), now)
                self._scenario_hook(race, e.first_block, now)
            elif isinstance(e, SetTimer):
                self._push(e.at, _TIMEOUT if e.kind is TimerKind.TIMEOUT else _ETA, m, e.first_block)
            elif isinstance(e, Violation):
                self.violations.add(e.block)

    def _prune(self, height: int) -> None:
        keep = height - 8
        self.forget_races_below(keep)
        for m in range(self.n):
            mem = self.members[m]
            for race in [r for r in mem if self.blocks[r].height < keep]:
                del mem[race]
            self.solved[m] = {r: t for r, t in self.solved[m].items() if self.blocks[r].height >= keep}
        self._prune_at = height + 64

    # handlers

    def _on_nonce(self, m: int, token: int, now: float) -> None:
        if token != self.token[m] or self.assigned[m] is None:
            return
        st = self.state[m]
        if self.green:
            new, ems = proto.on_nonce_found(st, now, self.params, len(self.blocks))
        else:
            new, ems = proto.baseline_pow_step(st, ("nonce", len(self.blocks)), now)
        self.state[m] = new
        self._emit(m, ems, now)
        if not self.finished:
            self._sync(m, now)

    def _on_block(self, recipients, bid: int, now: float) -> None:
        for m in recipients:
            self._receive_block(m, bid, now)
            if self.finished:
                return

    def _receive_block(self, m: int, bid: int, now: float) -> None:
        bit = 1 << m
        known = self.known
        if known[bid] & bit:
            return
        x = bid
        while not known[x] & bit:
            known[x] |= bit
            x = self.blocks[x].parent
        b = self.blocks[bid]
        st = self.state[m]
        if b.parent == st.chain_head:
            if not self.green:
                new, ems = proto.baseline_pow_step(st, ("block", b), now)
                self.state[m] = new
                self._sync(m, now)
                return
            first = b if b.is_first else self.blocks[b.parent]
            new, accepted, ems = proto.on_block_received(st, b, self._runner_set(m, first), now, self.params)
            if accepted:
                self.state[m] = new
                self._emit(m, ems, now)
                self._sync(m, now)
                return
            if ems:
                self.deferred[m].add(bid)
                self._emit(m, ems, now)
            return
        if bid not in self.deferred[m] and chain_key(b) > chain_key(self.blocks[st.chain_head]):
            self._reorg(m, b, now)

    def _reorg(self, m: int, tip: Block, now: float) -> None:
        st = self.state[m]
        if not self.green:
            new, ems = proto.baseline_pow_step(st, ("block", tip), now)
            self.state[m] = new
            self._sync(m, now)
            return
        solved = tip.is_first and tip.parent in self.solved[m] and tip.producer != m
        known = len(self._runner_set(m, tip)) if tip.is_first else 0
        new, ems = proto.reanchor(st, tip, now, self.params, solved_race=solved, known_runnerups=known)
        self.state[m] = new
        self._emit(m, ems, now)
        if solved and self.sel.kind is not SelectionKind.ALL and m not in self.members[m].get(tip.parent, {}):
            self._emit(m, (AnnounceRunnerUp(m, tip.id, self.solved[m][tip.parent]),), now)
        self._sync(m, now)

    def _on_announce(self, recipients, payload, now: float) -> None:
        sender, race, _first, found_at = payload
        for m in recipients:
            seen = self.members[m].setdefault(race, {})
            if sender in seen:
                continue
            seen[sender] = found_at
            st = self.state[m]
            if st.phase is not Phase.CONTINUE_FOR_RUNNERUP:
                continue
            head = self.blocks[st.chain_head]
            if head.parent != race:
                continue
            new, ems = proto.on_runnerup_received(st, len(self._runner_set(m, head)), self.params, now)
            if new is not st:
                self.state[m] = new
                self._emit(m, ems, now)
                self._sync(m, now)

    def _on_timeout(self, m: int, first_block: int, now: float) -> None:
        st = self.state[m]
        new = proto.on_timeout(st, now, first_block)
        if new is not st:
            self.timeouts_fired.add(first_block)
            self.state[m] = new
            self._sync(m, now)

    def _on_eta(self, m: int, first_block: int, now: float) -> None:
        st = self.state[m]
        if st.chain_head != first_block:
            return
        new = proto.on_eta_expired(st, now)
        if new is not st:
            self.state[m] = new
            self._sync(m, now)

    # scenarios

    def _scenario_hook(self, race: int, first_block: int, now: float) -> None:
        """Cut the runner-ups of a targeted epoch off from everyone else.

        Each runner-up is isolated as soon as it announces, so the whole
        set ends up behind one partition that opened at the first
        announcement of the epoch.
        """
        sc = self.cfg.scenario
        if sc is None or sc.name != "partition_runnerups":
            return
        first = self.blocks[first_block]
        epoch = first.height // 2
        if epoch not in sc.epochs:
            return
        slot = self._scenario_slots.get(epoch)
        if slot is None and not self._on_best_chain(first_block):
            return  # a side chain, not the epoch the network is in
        runners = frozenset(m for m in self.announcements.get(race, {}) if m != first.producer)
        if not runners:
            return
        if slot is None:
            duration = sc.duration if sc.duration is not None else 2.0 * self.params.timeout
            self._scenario_slots[epoch] = len(self.dynamic_partitions)
            self.dynamic_partitions.append(Partition(now, now + duration, runners))
            return
        part = self.dynamic_partitions[slot]
        if now < part.end and not runners <= part.members:
            self.dynamic_partitions[slot] = Partition(part.start, part.end, part.members | runners)

    def _on_best_chain(self, block_id: int) -> bool:
        b = self.best
        target = self.blocks[block_id]
        while b.height > target.height:
            b = self.blocks[b.parent]
        return b.id == target.id


# -- epoch engine ------------------------------------------------------------


class EpochSimulator(_Base):
    """Zero-delay, fault-free fast path: one pass per epoch, no event queue."""

    def run(self) -> SimReport:
        parent = GENESIS
        while not self.finished:
            parent = self._pow_block(parent) if not self.green else self._epoch(parent)
            if parent.height % 256 == 0:
                self.forget_races_below(parent.height - 4)
        return self.report("epoch")

    def _accrue_vector(self, ends: np.ndarray, starts, height: int, mask=None) -> None:
        dur = ends - starts
        if mask is not None:
            dur = np.where(mask, dur, 0.0)
        e = self.h * self.P * dur
        self.ledger.per_miner += e
        row = (height // 2, 1 + height % 2)
        self.ledger.add_epoch_totals(row[0], float(e.sum()) if row[1] == 1 else 0.0, float(e.sum()) if row[1] == 2 else 0.0)

    def _pow_block(self, parent: Block) -> Block:
        s = parent.found_at
        off = self.offsets(Puzzle(RaceKind.R1, parent.id))
        w = int(np.argmin(off))
        t = s + off[w]
        self.now = t
        self._accrue_vector(np.full(self.n, t), s, parent.height + 1)
        return self.mint(MintBlock(parent.height + 1, RoundTag.POW, parent.id, Target.D1), w, t)

    def _epoch(self, parent: Block) -> Block:
        n, h = self.n, self.h
        s = parent.found_at
        height = parent.height + 1
        off1 = self.offsets(Puzzle(RaceKind.R1, parent.id))
        order = np.argsort(off1, kind="stable")
        w = int(order[0])
        t1 = s + off1[w]
        first = self.mint(MintBlock(height, RoundTag.FIRST, parent.id, Target.D1), w, t1)
        self.now = t1
        if self.finished:
            self._accrue_vector(np.full(n, t1), s, height)
            return first

        sel = self.sel
        deadline = t1 + self.params.timeout
        r1_end = np.full(n, np.nan)
        r1_end[w] = t1
        r2_start = np.full(n, np.nan)
        anns: dict[int, float] = {}
        self.announcements[parent.id] = anns
        solves: list[tuple[float, int, int, bool]] = []  # (time, seq, miner, is_second)
        seq = 0
        off2 = off_sat = None

        def join_second(m: int, at: float) -> None:
            nonlocal off2, seq
            if off2 is None:
                off2 = self.offsets(Puzzle(RaceKind.R2, first.id))
            r2_start[m] = at
            seq += 1
            heapq.heappush(solves, (at + off2[m], seq, m, True))

        def resume(m: int, at: float) -> None:
            nonlocal off_sat, seq
            if off_sat is None:
                off_sat = self.offsets(Puzzle(RaceKind.SAT, first.id))
            r2_start[m] = at
            seq += 1
            heapq.heappush(solves, (at + off_sat[m], seq, m, False))

        racing = sel.kind is not SelectionKind.ALL
        if not racing:
            for m in range(n):
                if m != w:
                    r1_end[m] = t1
                    join_second(m, t1)
        idx = 1
        eta_close = math.inf
        fired = False
        while True:
            t_fin = s + off1[order[idx]] if racing and idx < n else math.inf
            t_sol = solves[0][0] if solves else math.inf
            t_dl = deadline if not fired else math.inf
            t_eta = eta_close if racing else math.inf
            t_next = min(t_fin, t_sol, t_dl, t_eta)
            if math.isinf(t_next):
                raise SimulationDeadlock(f"epoch at height {height} cannot finish: nobody is mining")
            if t_next == t_sol:
                break
            closed_at = None
            if t_next == t_fin:
                j = int(order[idx])
                idx += 1
                anns[j] = float(t_fin)
                r1_end[j] = t_fin
                join_second(j, t_fin)
                if sel.kind is SelectionKind.COUNT and len(anns) >= sel.value:
                    closed_at = t_fin
                elif sel.kind is SelectionKind.TIME_WINDOW and len(anns) == 1:
                    eta_close = t_fin + sel.value
                    if sel.value == 0:
                        closed_at = t_fin
                if idx >= n and closed_at is None:
                    racing = False
            elif t_next == t_eta:
                closed_at = eta_close
            else:
                fired = True
                self.timeouts_fired.add(first.id)
                if racing:
                    r1_end[order[idx:]] = deadline
                    racing = False
                for m in range(n):
                    if math.isnan(r2_start[m]):
                        resume(m, deadline)
            if closed_at is not None:
                r1_end[order[idx:]] = closed_at
                racing = False
        t_end, _, producer, is_second = solves[0]
        if racing:
            r1_end[order[idx:]] = t_end
        tag = RoundTag.SECOND if is_second else RoundTag.SECOND_AFTER_TIMEOUT
        target = Target.D2 if is_second else Target.D1
        self.now = t_end
        self._accrue_vector(r1_end, s, height, ~np.isnan(r1_end))
        active = ~np.isnan(r2_start)
        self._accrue_vector(np.full(n, t_end), np.where(active, r2_start, t_end), height + 1, active)
        return self.mint(MintBlock(height + 1, tag, first.id, target), producer, t_end)


# -- entry points -----------------------------------------------------------


def run_simulation(config: SimConfig, replication: int = 0) -> SimReport:
    """Simulate until the block budget is on the canonical chain."""
    engine = config.engine
    if engine is Engine.AUTO:
        engine = Engine.EVENT if config.needs_event_engine else Engine.EPOCH
    if engine is Engine.EPOCH:
        if config.needs_event_engine:
            raise ValueError("the epoch engine only handles zero-delay networks without partitions or scenarios")
        return EpochSimulator(config, replication).run()
    return EventSimulator(config, replication).run()


def _run_one(args):
    config, rep = args
    return run_simulation(config, rep)


def run_replications(config: SimConfig, workers: int = 1) -> list[SimReport]:
    """All replications of ``config``, in replication order."""
    jobs = [(config, r) for r in range(config.replications)]
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
