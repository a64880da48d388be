import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenpow import Selection, SimConfig, run_simulation
from greenpow.analysis import (
    BlockTrace,
    UnawareForm,
    UnawareModel,
    censorship_window,
    eta_study,
    fork_probability,
    longest_runs,
    power_distribution,
    second_round_cdf,
    share_redistribution,
    timeout_curve,
    write_share_table,
)
from greenpow.report import read_csv
from greenpow.stochastic import MiningRate, RandomSource

LAM = 1 / 600


# -- fork model ------------------------------------------------------------------


def test_fork_probability_closed_forms():
    p_b = LAM
    expected = 1 - (1 - p_b) ** 2
    assert fork_probability(UnawareModel("exponential", 2.0), p_b) == pytest.approx(expected, rel=1e-12)
    assert fork_probability(UnawareModel("step", 2.0), p_b) == pytest.approx(expected, rel=1e-12)
    assert fork_probability(UnawareModel("linear", 4.0), p_b) == pytest.approx(expected, rel=1e-12)
    assert fork_probability(UnawareModel("exponential", 2.0), 0.0) == 0.0
    assert fork_probability(UnawareModel("exponential", 0.0), 0.3) == 0.0


def test_custom_shape_matches_the_closed_form():
    tau = 3.5
    custom = UnawareModel(UnawareForm.CUSTOM, func=lambda t: math.exp(-t / tau))
    assert custom.integral() == pytest.approx(tau, rel=1e-9)
    assert fork_probability(custom, 0.01) == pytest.approx(fork_probability(UnawareModel("exponential", tau), 0.01))


@pytest.mark.parametrize(
    "func",
    [lambda t: 0.5, lambda t: min(1.0, t), lambda t: -1.0 if t > 1 else 1.0],
)
def test_custom_shape_validation(func):
    with pytest.raises(ValueError):
        UnawareModel(UnawareForm.CUSTOM, func=func)


def test_model_validation():
    with pytest.raises(ValueError):
        UnawareModel("custom")
    with pytest.raises(ValueError):
        UnawareModel("exponential", -1.0)
    with pytest.raises(ValueError):
        UnawareModel("zigzag")
    with pytest.raises(ValueError):
        fork_probability(UnawareModel("step"), 1.0)
    with pytest.raises(ValueError):
        UnawareModel("step").u(-1)


def test_u_shapes():
    assert UnawareModel("linear", 4.0).u(1.0) == 0.75
    assert UnawareModel("linear", 4.0).u(9.0) == 0.0
    assert UnawareModel("step", 4.0).u(3.9) == 1.0 and UnawareModel("step", 4.0).u(4.0) == 0.0
    assert UnawareModel("exponential", 2.0).u(2.0) == pytest.approx(math.exp(-1))


@given(
    form=st.sampled_from(["exponential", "linear", "step"]),
    scale=st.floats(0, 100),
    p1=st.floats(0, 0.99),
    p2=st.floats(0, 0.99),
)
def test_fork_probability_is_monotone_in_p_b(form, scale, p1, p2):
    m = UnawareModel(form, scale)
    lo, hi = sorted((p1, p2))
    f_lo, f_hi = fork_probability(m, lo), fork_probability(m, hi)
    assert 0.0 <= f_lo <= f_hi <= 1.0


@given(s1=st.floats(0, 50), s2=st.floats(0, 50))
def test_fork_probability_grows_with_propagation_time(s1, s2):
    lo, hi = sorted((s1, s2))
    assert fork_probability(UnawareModel("exponential", lo), LAM) <= fork_probability(UnawareModel("exponential", hi), LAM)


# -- censorship ------------------------------------------------------------------


def test_censorship_windows():
    rate = MiningRate(LAM)
    assert censorship_window(3, rate) == pytest.approx(1800)
    trace = BlockTrace.from_miners("abbacccd")
    assert censorship_window(5, rate, "green_pow", trace) == pytest.approx(1800)
    assert censorship_window(5, rate, "green_pow", trace, attacker="b") == pytest.approx(1200)
    assert censorship_window(1, rate, "green_pow", trace, attacker="c") == pytest.approx(600)
    assert censorship_window(5, rate, "green_pow", trace, attacker="zz") == 0.0
    with pytest.raises(ValueError):
        censorship_window(3, rate, "green_pow")
    with pytest.raises(ValueError):
        censorship_window(0, rate)


def test_simulated_green_chain_never_has_a_winner_streak_of_three():
    # a FIRST winner cannot also mine the SECOND block, so streaks cross at most one epoch boundary
    rep = run_simulation(SimConfig(miners=4, block_budget=4000, selection=Selection.count(1), seed=3))
    runs = longest_runs(BlockTrace.from_report(rep))
    assert max(runs.values()) <= 2


# -- share redistribution -----------------------------------------------------------


def test_no_runs_means_no_change():
    rows = share_redistribution(BlockTrace.from_miners("abcabcab"), RandomSource(0))
    for r in rows:
        assert r.pow_share_pct == pytest.approx(r.greenpow_share_pct)


def test_single_miner_is_rejected():
    with pytest.raises(ValueError):
        share_redistribution(BlockTrace.from_miners("aaaa"), RandomSource(0))


def test_redistribution_by_hand():
    # a run of four loses two blocks plus a coin flip; p=1 makes the flip certain
    trace = BlockTrace.from_miners(list("aaaabbcd"))
    rows = {r.miner_id: r for r in share_redistribution(trace, RandomSource(0), p=1.0, redistribute="uniform")}
    # a loses 3, b loses 1; each loss is spread evenly over the other three miners
    assert rows["a"].greenpow_share_pct == pytest.approx((4 - 3 + 1 / 3) / 8 * 100)
    assert rows["b"].greenpow_share_pct == pytest.approx((2 - 1 + 1) / 8 * 100)
    assert rows["c"].greenpow_share_pct == pytest.approx((1 + 1 + 1 / 3) / 8 * 100)
    rows0 = share_redistribution(trace, RandomSource(0), p=0.0)
    assert {r.miner_id: r.greenpow_share_pct for r in rows0}["b"] > 25.0 - 1e-12


def test_rows_sorted_by_pow_share():
    rows = share_redistribution(BlockTrace.from_miners("aabbbcdd"), RandomSource(1))
    shares = [(r.pow_share_pct, r.miner_id) for r in rows]
    assert shares == sorted(shares)


@settings(max_examples=80)
@given(
    miners=st.lists(st.sampled_from("abcdef"), min_size=2, max_size=200),
    seed=st.integers(0, 1000),
    mode=st.sampled_from(["proportional", "uniform"]),
)
def test_share_properties(miners, seed, mode):
    if len(set(miners)) < 2:
        return
    trace = BlockTrace.from_miners(miners)
    rows = share_redistribution(trace, RandomSource(seed), redistribute=mode)
    assert math.isclose(sum(r.greenpow_share_pct for r in rows), 100.0, abs_tol=1e-9)
    assert math.isclose(sum(r.pow_share_pct for r in rows), 100.0, abs_tol=1e-9)
    n = len(trace)
    run_blocks = {}
    for m, group in itertools.groupby(trace.miners):
        length = len(list(group))
        if length >= 2:
            run_blocks[m] = run_blocks.get(m, 0) + length - 1
    for r in rows:
        # a miner loses at most one block less than each of its streaks, and only streaks lose blocks
        assert r.greenpow_share_pct * n / 100 >= r.pow_share_pct * n / 100 - run_blocks.get(r.miner_id, 0) - 1e-9
        if r.miner_id not in run_blocks:
            assert r.greenpow_share_pct >= r.pow_share_pct - 1e-9
    if len(run_blocks) == 1:
        (only,) = run_blocks
        row = next(r for r in rows if r.miner_id == only)
        assert row.greenpow_share_pct <= row.pow_share_pct + 1e-9


def test_share_table_csv(tmp_path):
    rows = share_redistribution(BlockTrace.from_miners("aabbbcdd"), RandomSource(1))
    path = tmp_path / "shares.csv"
    write_share_table(rows, path)
    back = read_csv(path)
    assert [r["miner_id"] for r in back] == [r.miner_id for r in rows]
    assert sum(float(r["greenpow_share_pct"]) for r in back) == pytest.approx(100.0)


# -- traces ----------------------------------------------------------------------


def test_trace_validation():
    with pytest.raises(ValueError):
        BlockTrace((1, 3), ("a", "b"))
    with pytest.raises(ValueError):
        BlockTrace((1, 2), ("a", " "))
    with pytest.raises(ValueError):
        BlockTrace((), ())
    with pytest.raises(ValueError):
        BlockTrace((1,), ("a", "b"))
    assert BlockTrace.from_miners("ab", start=10).block_range == (10, 11)


def test_trace_csv_round_trip(tmp_path):
    trace = BlockTrace.from_miners(["0x1", "0x2", "0x2"], start=100)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_bytes() == b"height,miner_id\n100,0x1\n101,0x2\n102,0x2\n"
    back = BlockTrace.from_csv(path)
    assert back.heights == trace.heights and back.miners == trace.miners


def test_trace_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_bytes(b"height,miner_id\n1,a\nx,b\n")
    with pytest.raises(ValueError, match="bad.csv:3"):
        BlockTrace.from_csv(bad)
    bad.write_bytes(b"height,miner\n1,a\n")
    with pytest.raises(ValueError):
        BlockTrace.from_csv(bad)


# -- eta and timeout -----------------------------------------------------------------


def test_power_distribution_names():
    assert power_distribution("non-uniform") == power_distribution("nonuniform")
    with pytest.raises(ValueError):
        power_distribution("skewed")


def test_eta_grows_with_k():
    pts = eta_study([1, 3, 8], miners=50, epochs=800, seed=4)
    assert pts[0].mean_eta_s == 0.0
    assert pts[0].mean_eta_s < pts[1].mean_eta_s < pts[2].mean_eta_s
    assert all(p.epochs == 800 for p in pts)
    assert pts[2].mean_eta_min == pytest.approx(pts[2].mean_eta_s / 60)


def test_timeout_curve_values():
    curve = timeout_curve(MiningRate(0.1), [0.5, 0.7, 0.9])
    assert [t for _, t in curve.points] == pytest.approx([10 * math.log(2), -10 * math.log(0.3), 10 * math.log(10)])
    assert curve.band == pytest.approx((-10 * math.log(0.3), 10 * math.log(10)))
    with pytest.raises(ValueError):
        timeout_curve(MiningRate(0.1), [1.0])


@given(p=st.floats(0, 0.999999), lam=st.floats(1e-4, 10))
def test_timeout_curve_inverts_the_cdf(p, lam):
    rate = MiningRate(lam)
    (_, t), = timeout_curve(rate, [p]).points
    assert second_round_cdf(rate, t) == pytest.approx(p, abs=1e-12)


def test_second_round_cdf_rejects_negative_time():
    with pytest.raises(ValueError):
        second_round_cdf(MiningRate(1.0), -1.0)
    assert np.isclose(second_round_cdf(MiningRate(1.0), 1.0), 1 - math.exp(-1))
