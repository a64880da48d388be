import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from greenpow import DelaySpec, Engine, Partition, PowerSpec, Scenario, Selection, SimConfig
from greenpow.difficulty import Target
from greenpow.protocol import Block, RaceKind, RoundTag
from greenpow.simnet import (
    GENESIS,
    ChainView,
    EventSimulator,
    SimulationDeadlock,
    TopologyModel,
    calibrate_d2,
    deliver,
    resolve_forks,
    run_replications,
    run_simulation,
)
from greenpow.stochastic import HashPowerProfile, RandomSource, Timing

from invariants import AuditedSimulator, check_energy, check_report, random_config, report_fingerprint


def blk(i, parent, found_at, producer, cum_work, height=0):
    return Block(i, height, RoundTag.FIRST, producer, parent, found_at, Target.D1, 1.0, cum_work)


# -- fork choice ----------------------------------------------------------------


def test_heavier_tip_wins_regardless_of_time():
    view = ChainView.from_blocks([GENESIS, blk(1, 0, 10.0, 0, 1.0), blk(2, 0, 5.0, 1, 0.9)])
    assert view.canonical_head == 1


@pytest.mark.parametrize("t1,p1,t2,p2", list(itertools.product([10.0, 11.0], [0, 3], [10.0, 11.0], [1, 2])))
def test_equal_work_tie_break(t1, p1, t2, p2):
    view = ChainView.from_blocks([GENESIS, blk(1, 0, t1, p1, 1.0), blk(2, 0, t2, p2, 1.0)])
    expect = 1 if (t1, p1) < (t2, p2) else 2
    assert resolve_forks(view) == expect


def test_chain_view_rejects_orphans():
    with pytest.raises(ValueError):
        ChainView.from_blocks([GENESIS, blk(1, 7, 1.0, 0, 1.0)])
    assert ChainView.from_blocks([GENESIS, blk(1, 0, 1.0, 0, 1.0)]).chain() == [blk(1, 0, 1.0, 0, 1.0)]


# -- network ---------------------------------------------------------------------


def test_deliver_groups_by_arrival_time():
    matrix = ((0, 5, 1, 5), (5, 0, 2, 2), (1, 2, 0, 3), (5, 2, 3, 0))
    topo = TopologyModel(DelaySpec("per_pair", matrix=matrix))
    assert deliver(0, range(4), 10.0, topo) == [(11.0, (2,)), (15.0, (1, 3))]


def test_deliver_drops_partitioned_peers_at_send_time():
    part = Partition(0.0, 50.0, frozenset({1}))
    topo = TopologyModel(DelaySpec("constant", 2.0), (part,))
    assert deliver(0, range(3), 10.0, topo) == [(12.0, (2,))]
    assert deliver(1, range(3), 10.0, topo) == []
    # the partition has healed by 50 s; nothing is replayed, later sends go through
    assert deliver(1, range(3), 50.0, topo) == [(52.0, (0, 2))]
    assert deliver(0, range(3), 10.0, TopologyModel(DelaySpec()), extra=(part,)) == [(10.0, (2,))]


# -- calibration ----------------------------------------------------------------


@pytest.mark.parametrize("n,k", [(10, 1), (10, 3), (100, 10), (5, 9)])
def test_uniform_count_calibration_is_exact(n, k):
    prof = HashPowerProfile.from_weights([1] * n)
    d2 = calibrate_d2(prof, Selection.count(k), Timing.QUANTILE, 1 / 600, RandomSource(0), 10)
    assert d2 == pytest.approx(min(k, n - 1) / n)


def test_all_mode_calibration_for_uniform_power():
    prof = HashPowerProfile.from_weights([1] * 20)
    d2 = calibrate_d2(prof, Selection.everyone(), Timing.QUANTILE, 1 / 600, RandomSource(0), 200)
    assert d2 == pytest.approx(19 / 20)


# -- engines --------------------------------------------------------------------


ZERO_DELAY = [
    SimConfig(miners=20, block_budget=200, selection=Selection.count(3), seed=1, pilot_samples=200),
    SimConfig(miners=15, block_budget=150, selection=Selection.window(60.0), seed=2, pilot_samples=200),
    SimConfig(miners=12, block_budget=150, selection=Selection.everyone(), timeout=1380.0, seed=3, pilot_samples=200),
    SimConfig(miners=30, block_budget=120, selection=Selection.count(2), power=PowerSpec(10, 50), timeout=900.0,
              seed=4, window_blocks=10, pilot_samples=200),
    SimConfig(algorithm="pow", miners=10, block_budget=100, seed=5),
]


@pytest.mark.parametrize("cfg", ZERO_DELAY, ids=lambda c: f"{c.algorithm.value}-{c.selection.label()}")
def test_engines_agree_on_zero_delay_networks(cfg):
    a = run_simulation(dataclasses.replace(cfg, engine=Engine.EPOCH))
    b = run_simulation(dataclasses.replace(cfg, engine=Engine.EVENT))
    assert a.engine == "epoch" and b.engine == "event"
    trail = lambda r: [(x.height, x.round_tag, x.producer, x.found_at) for x in r.chain]  # noqa: E731
    assert trail(a) == trail(b)
    assert a.timeout_count == b.timeout_count
    assert np.allclose(a.ledger.per_miner, b.ledger.per_miner, rtol=1e-9, atol=1e-9)
    assert a.saving_pct == pytest.approx(b.saving_pct, rel=1e-9, abs=1e-9)


def test_epoch_engine_refuses_networks_with_delay():
    cfg = SimConfig(miners=5, block_budget=10, delay=DelaySpec("constant", 1.0), engine=Engine.EPOCH)
    with pytest.raises(ValueError):
        run_simulation(cfg)


def test_all_mode_with_uniform_power_degenerates_to_pow():
    cfg = SimConfig(miners=100, block_budget=4000, selection=Selection.everyone(), seed=6)
    rep = run_simulation(cfg)
    assert abs(rep.saving_pct) < 2.0


def test_replications_are_reproducible_and_distinct():
    cfg = SimConfig(miners=8, block_budget=40, selection=Selection.count(2), replications=3, seed=9, pilot_samples=100)
    serial = run_replications(cfg)
    parallel = run_replications(cfg, workers=2)
    assert [report_fingerprint(r) for r in serial] == [report_fingerprint(r) for r in parallel]
    assert serial[0].chain != serial[1].chain


def test_same_seed_same_report():
    cfg = SimConfig(miners=10, block_budget=60, delay=DelaySpec("constant", 30.0), timeout=900.0, seed=12,
                    pilot_samples=100)
    assert report_fingerprint(run_simulation(cfg)) == report_fingerprint(run_simulation(cfg))


# -- scripted races ------------------------------------------------------------------


class Scripted(EventSimulator):
    """Opening race fixed by hand; everything later is random."""

    opening = np.array([100.0, 101.0, 5000.0])

    def offsets(self, puzzle):
        if puzzle.kind is RaceKind.R1 and puzzle.parent == 0:
            return self.opening
        return super().offsets(puzzle)


def test_near_simultaneous_first_blocks_fork_and_resolve():
    cfg = SimConfig(miners=3, block_budget=4, delay=DelaySpec("constant", 2.0), seed=3, pilot_samples=50)
    sim = Scripted(cfg)
    rep = sim.run()
    fork = rep.forks[0]
    assert fork.height == 0 and len(fork.blocks) == 2
    # equal work: the earlier block wins and the loser becomes the runner-up
    assert rep.chain[0].producer == 0
    assert rep.chain[1].round_tag is RoundTag.SECOND and rep.chain[1].producer == 1
    assert rep.epochs[0].runnerups[0] == (1, 101.0)


def test_no_fork_without_delay():
    cfg = SimConfig(miners=3, block_budget=4, seed=3, pilot_samples=50)
    rep = Scripted(cfg).run()
    assert not rep.forks
    assert rep.chain[0].producer == 0


class Stalled(EventSimulator):
    def offsets(self, puzzle):
        return np.full(self.n, np.inf)


def test_deadlock_is_reported():
    with pytest.raises(SimulationDeadlock, match="no events left"):
        Stalled(SimConfig(miners=3, block_budget=4, pilot_samples=50)).run()


# -- scenarios -------------------------------------------------------------------


def test_partitioned_runnerups_force_timeout_epochs():
    cfg = SimConfig(
        miners=20, block_budget=30, selection=Selection.count(2), timeout=6000.0, seed=5, window_blocks=10,
        scenario=Scenario("partition_runnerups", (4, 10)), pilot_samples=200,
    )
    rep = run_simulation(cfg)
    assert {e.epoch for e in rep.epochs if e.timed_out} == {4, 10}
    assert rep.timeout_count == 2


def test_static_partition_still_reaches_budget():
    cfg = SimConfig(miners=10, block_budget=30, timeout=1380.0, seed=2,
                    partitions=(Partition(0.0, 5000.0, frozenset({0, 1, 2})),), pilot_samples=100)
    rep = run_simulation(cfg)
    assert len(rep.chain) == 30
    assert not check_report(cfg, rep)


# -- invariants over random configurations ------------------------------------------


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**32 - 1))
def test_protocol_invariants_hold(seed):
    cfg = random_config(np.random.default_rng(seed))
    sim = AuditedSimulator(cfg)
    rep = sim.run()
    assert check_report(cfg, rep) == []
    assert check_energy(sim, rep) == []
    assert math.isfinite(rep.ledger.total)
