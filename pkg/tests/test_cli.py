import json
import math
import subprocess
import sys

import pytest

from greenpow import cli
from greenpow.report import TABLES, read_csv


@pytest.fixture(autouse=True)
def artifacts(tmp_path, monkeypatch):
    root = tmp_path / "artifacts"
    monkeypatch.setenv(cli.ENV_ROOT, str(root))
    return root


def run(*argv):
    return cli.main([str(a) for a in argv])


SMALL = ("--miners", 10, "--blocks", 40, "--seed", 3)


# -- value parsing ---------------------------------------------------------------


@pytest.mark.parametrize(
    "text,seconds",
    [("1380", 1380.0), ("1380s", 1380.0), ("23min", 1380.0), ("1.5h", 5400.0), ("250ms", 0.25), ("inf", math.inf)],
)
def test_parse_duration(text, seconds):
    assert cli.parse_duration(text) == seconds


@pytest.mark.parametrize("bad", ["", "ten", "5 parsecs", "-3s"])
def test_parse_duration_rejects(bad):
    with pytest.raises(cli.UsageError):
        cli.parse_duration(bad)


def test_parse_values_and_numbers():
    assert cli.parse_values("1..4") == ["1", "2", "3", "4"]
    assert cli.parse_values("0..1..0.5") == ["0.0", "0.5", "1.0"]
    assert cli.parse_values("100, 200") == ["100", "200"]
    assert cli.parse_number("1/600") == pytest.approx(1 / 600)
    assert cli.parse_concentration("5:50") == {"top_pct": 5.0, "held_pct": 50.0}
    for bad in ("3..1", "1..2..0", ","):
        with pytest.raises(cli.UsageError):
            cli.parse_values(bad)
    with pytest.raises(cli.UsageError):
        cli.parse_number("1/0")


# -- run ---------------------------------------------------------------------------


def test_run_writes_all_artifacts(tmp_path, capsys):
    out = tmp_path / "r"
    assert run("run", *SMALL, "--k", 2, "--out", out) == cli.EXIT_OK
    assert "saving_pct" in capsys.readouterr().out
    for name, header in TABLES.items():
        text = (out / f"{name}.csv").read_bytes()
        assert b"\r" not in text
        assert text.split(b"\n", 1)[0].decode() == ",".join(header)
    blocks = read_csv(out / "blocks.csv")
    assert len(blocks) == 40
    man = json.loads((out / "manifest.json").read_text())
    assert man["format"] == cli.MANIFEST_FORMAT and man["seed"] == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["canonical_blocks"] == 40


def test_default_directory_lives_under_the_artifact_root(artifacts, capsys):
    assert run("run", *SMALL) == cli.EXIT_OK
    dirs = list(artifacts.iterdir())
    assert len(dirs) == 1 and dirs[0].name.startswith("green_pow-n10-count1-s3-")
    assert str(dirs[0]) in capsys.readouterr().out


def test_manifest_reproduces_the_run(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run("run", *SMALL, "--k", 2, "--delay", "5s", "--timeout", "23min", "--out", first) == 0
    assert run("run", "--config", first / "manifest.json", "--out", second) == 0
    for name in [*TABLES, "summary"]:
        ext = "json" if name == "summary" else "csv"
        assert (first / f"{name}.{ext}").read_bytes() == (second / f"{name}.{ext}").read_bytes()


def test_scenario_run_has_timeout_epochs(tmp_path):
    out = tmp_path / "sc"
    code = run("run", "--miners", 20, "--blocks", 30, "--k", 1, "--seed", 2,
               "--scenario", "partition_runnerups", "--scenario-epochs", "3,8", "--timeout", "1380s", "--out", out)
    assert code == cli.EXIT_OK
    epochs = read_csv(out / "epochs.csv")
    assert sum(r["timeout"] == "1" for r in epochs) >= 1


def test_pow_run(tmp_path):
    out = tmp_path / "pow"
    assert run("run", "--algorithm", "pow", *SMALL, "--out", out) == 0
    assert {r["round_tag"] for r in read_csv(out / "blocks.csv")} == {"POW"}


# -- sweep ----------------------------------------------------------------------


def test_thirty_point_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    code = run("sweep", "--param", "k=1..10", "--param", "miners=20,30,40", "--blocks", 12, "--seed", 1, "--out", out)
    assert code == cli.EXIT_OK
    rows = read_csv(out / "sweep.csv", cli.SWEEP_HEADER)
    assert len(rows) == 30
    assert len([p for p in out.iterdir() if p.is_dir()]) == 30
    assert {r["miners"] for r in rows} == {"20", "30", "40"}
    assert "sweep points: 30" in capsys.readouterr().out


def test_list_flags_turn_run_into_sweep(tmp_path):
    out = tmp_path / "sw"
    assert run("run", "--k", "1..3", "--miners", "10,12", "--blocks", 10, "--out", out) == 0
    assert len(read_csv(out / "sweep.csv")) == 6


def test_sweep_needs_an_axis():
    assert run("sweep", "--blocks", 10) == cli.EXIT_CONFIG


def test_failed_sweep_point_leaves_error_marker(tmp_path, monkeypatch):
    real = cli.run_simulation

    def flaky(config, replication=0):
        if config.miners == 12:
            raise RuntimeError("injected failure")
        return real(config, replication)

    monkeypatch.setattr(cli, "run_simulation", flaky)
    out = tmp_path / "sw"
    assert run("sweep", "--param", "miners=10,12", "--blocks", 10, "--out", out) == cli.EXIT_RUNTIME
    assert (out / "ERROR").exists()
    bad = next(p for p in out.iterdir() if p.name.endswith("miners12"))
    assert (bad / "ERROR").exists() and (bad / "manifest.json").exists()
    assert len(read_csv(out / "sweep.csv")) == 1


def test_failed_run_exits_3_with_manifest(tmp_path, monkeypatch, capsys):
    def boom(config, replication=0):
        raise RuntimeError("injected failure")

    monkeypatch.setattr(cli, "run_simulation", boom)
    out = tmp_path / "r"
    assert run("run", *SMALL, "--out", out) == cli.EXIT_RUNTIME
    assert (out / "manifest.json").exists()
    assert "injected failure" in (out / "ERROR").read_text()
    assert "runtime error" in capsys.readouterr().err


# -- configuration errors -------------------------------------------------------------


def test_config_error_points_at_the_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "miners": 10,\n  "timeout": -5\n}\n')
    assert run("run", "--config", cfg) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bad.json:3:" in err and "timeout" in err


def test_invalid_json_reports_line_and_column(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text('{\n  "miners": 10,\n  "seed": \n}\n')
    assert run("run", "--config", cfg) == cli.EXIT_CONFIG
    assert "broken.json:4:1" in capsys.readouterr().err


def test_unknown_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "extra.json"
    cfg.write_text('{"miners": 10,\n "colour": "green"}')
    assert run("run", "--config", cfg) == cli.EXIT_CONFIG
    assert "extra.json:2:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ("--miners", "abc"),
        ("--timeout", "soon"),
        ("--miners", 1),
        ("--k", 0),
        ("--scenario", "partition_runnerups"),
        ("--concentration", "lots"),
        ("--lambda", "1/0"),
    ],
)
def test_bad_flags_exit_2(argv, capsys):
    assert run("run", "--blocks", 10, *argv) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_argparse_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        run("run", "--engine", "warp")
    assert exc.value.code == 2


# -- analyze --------------------------------------------------------------------------


def test_timeout_curve_output(capsys):
    assert run("analyze", "--timeout-curve", "--lambda", "0.1", "--p", "0.7,0.9") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "p,wait"
    waits = [float(x.split(",")[1]) for x in lines[1:]]
    assert waits == pytest.approx([-10 * math.log(0.3), 10 * math.log(10)], rel=1e-12)


def test_named_analysis_and_unknown_name(capsys):
    assert run("analyze", "timeout-curve") == 0
    capsys.readouterr()
    assert run("analyze", "tea-leaves") == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    for name in cli.ANALYSES:
        assert name in err


def test_fork_probability_output(capsys):
    assert run("analyze", "--fork-probability", "--scale", "2s,4s") == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    probs = [float(r.split(",")[-1]) for r in rows]
    assert probs[0] == pytest.approx(1 - (1 - 1 / 600) ** 2)
    assert probs[0] < probs[1]


def test_shares_from_trace_file(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    trace.write_text("height,miner_id\n" + "".join(f"{i},{m}\n" for i, m in enumerate("aabaaacdcb")))
    out = tmp_path / "shares.csv"
    assert run("analyze", "--shares", trace, "--out", out) == 0
    rows = read_csv(out)
    assert sum(float(r["greenpow_share_pct"]) for r in rows) == pytest.approx(100.0, abs=1e-9)
    assert sum(float(r["pow_share_pct"]) for r in rows) == pytest.approx(100.0, abs=1e-9)


def test_shares_and_censorship_from_a_run_directory(tmp_path, capsys):
    out = tmp_path / "r"
    assert run("run", *SMALL, "--out", out) == 0
    capsys.readouterr()
    assert run("analyze", "shares", out) == 0
    assert run("analyze", "--censorship", out, "--k", "1..3") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-4] == "k,pow_window,green_pow_window,longest_run"


def test_strict_trace_parsing(tmp_path, capsys):
    crlf = tmp_path / "crlf.csv"
    crlf.write_bytes(b"height,miner_id\r\n1,a\r\n2,b\r\n")
    assert run("analyze", "--shares", crlf) == cli.EXIT_CONFIG
    ragged = tmp_path / "ragged.csv"
    ragged.write_bytes(b"height,miner_id\n1,a,extra\n2,b\n")
    assert run("analyze", "--shares", ragged) == cli.EXIT_CONFIG
    gap = tmp_path / "gap.csv"
    gap.write_bytes(b"height,miner_id\n1,a\n3,b\n")
    assert run("analyze", "--shares", gap) == cli.EXIT_CONFIG
    assert run("analyze", "--shares", tmp_path / "missing.csv") == cli.EXIT_CONFIG


def test_eta_output(capsys):
    assert run("analyze", "--eta", "--k", "1,4", "--miners", 30, "--epochs", 200) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "miners,k,distribution,mean_eta_s,mean_eta_min,epochs"
    assert len(lines) == 3


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "greenpow.cli", "analyze", "--timeout-curve"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and proc.stdout.startswith("p,wait\n")


def test_concentration_sweep(tmp_path):
    out = tmp_path / "sw"
    assert run("sweep", "--param", "concentration=2:50,5:50", "--miners", 50, "--blocks", 10, "--out", out) == 0
    rows = read_csv(out / "sweep.csv")
    assert [(r["top_pct"], r["held_pct"]) for r in rows] == [("2.0", "50.0"), ("5.0", "50.0")]
