"""Command-line experiment runner.

    greenpow run      single runs, or sweeps when --sweep / list-valued flags are given
    greenpow sweep    parameter sweeps from a config file plus --param specs
    greenpow analyze  analytic tables and trace analyses

Artifacts go under $GREENPOW_ARTIFACTS (default ./artifacts) unless --out is
given. Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import os
import re
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .analysis import (
    BlockTrace,
    UnawareModel,
    censorship_window,
    eta_study,
    fork_probability,
    longest_runs,
    share_redistribution,
    timeout_curve,
)
from .config import ConfigError, SimConfig
from .report import aggregate_summary, dumps, read_csv, write_csv, write_report_tables
from .simnet import run_simulation
from .stochastic import MiningRate, RandomSource

log = logging.getLogger("greenpow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
ENV_ROOT = "GREENPOW_ARTIFACTS"
MANIFEST_FORMAT = "greenpow-manifest/1"
ANALYSES = ("timeout_curve", "shares", "eta_study", "fork_probability", "censorship")

SWEEP_HEADER = (
    "point", "algorithm", "miners", "selection", "top_pct", "held_pct", "timeout", "delay", "seed",
    "replications", "epochs", "saving_pct", "fork_rate_first", "fork_rate_second", "timeout_epochs",
    "mean_runnerups", "mean_eta", "directory",
)


class UsageError(Exception):
    """Bad flag values; reported like configuration errors."""


# -- value parsing ---------------------------------------------------------------

_UNITS = {"": 1.0, "s": 1.0, "sec": 1.0, "m": 60.0, "min": 60.0, "h": 3600.0, "ms": 1e-3}


def parse_duration(text: str) -> float:
    """Seconds from '1380', '1380s', '23min', '1.5h', '250ms' or 'inf'."""
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "none"):
        return math.inf
    m = re.fullmatch(r"([0-9]*\.?[0-9]+(?:e[+-]?\d+)?)\s*([a-z]*)", t)
    if not m or m.group(2) not in _UNITS:
        raise UsageError(f"cannot read duration {text!r} (use e.g. 1380s, 23min, 1.5h)")
    return float(m.group(1)) * _UNITS[m.group(2)]


def parse_number(text: str) -> float:
    t = str(text).strip()
    if "/" in t:
        a, _, b = t.partition("/")
        try:
            return float(a) / float(b)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"cannot read number {text!r}") from None
    try:
        return float(t)
    except ValueError:
        raise UsageError(f"cannot read number {text!r}") from None


def parse_int(text: str, flag: str) -> int:
    try:
        return int(str(text).strip())
    except ValueError:
        raise UsageError(f"{flag}: expected an integer, got {text!r}") from None


def parse_values(text: str) -> list[str]:
    """'1..10' (inclusive), '0..1..0.25' (with step) or 'a,b,c'."""
    t = str(text).strip()
    if ".." in t:
        parts = t.split("..")
        if len(parts) not in (2, 3):
            raise UsageError(f"bad range {text!r}")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise UsageError(f"bad range {text!r}") from None
        start, stop = nums[0], nums[1]
        step = nums[2] if len(parts) == 3 else 1.0
        if step <= 0 or stop < start:
            raise UsageError(f"bad range {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(count)]
        integral = all(float(p).is_integer() for p in nums)
        return [str(int(v)) if integral else repr(v) for v in vals]
    vals = [v.strip() for v in t.split(",") if v.strip()]
    if not vals:
        raise UsageError(f"empty value list {text!r}")
    return vals


def parse_concentration(text: str) -> dict[str, float]:
    """'5:50' means the top 5% of miners hold 50% of the power."""
    m = re.fullmatch(r"\s*([0-9.]+)\s*[:/]\s*([0-9.]+)\s*", str(text))
    if not m:
        raise UsageError(f"cannot read concentration {text!r} (use TOP:HELD, e.g. 5:50)")
    return {"top_pct": float(m.group(1)), "held_pct": float(m.group(2))}


# -- configuration assembly ------------------------------------------------------------


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return None


class ConfigSource:
    """A JSON config file (plain config or an emitted manifest) plus its text for diagnostics."""

    def __init__(self, path: str | None):
        self.path = path
        self.text = ""
        self.data: dict[str, Any] = {}
        if path is None:
            return
        try:
            self.text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        try:
            data = json.loads(self.text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}:1: configuration must be a JSON object")
        if data.get("format") == MANIFEST_FORMAT:
            data = data.get("config")
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: manifest has no config object")
        self.data = data

    def locate(self, key: str | None) -> str:
        if self.path is None:
            return ""
        line = _key_line(self.text, key) if key else None
        return f"{self.path}:{line}: " if line else f"{self.path}: "


_FLAG_OF = {
    "algorithm": "--algorithm", "miners": "--miners", "block_budget": "--blocks", "seed": "--seed",
    "selection": "--k/--eta/--all-runnerups", "timeout": "--timeout", "lambda": "--lambda",
    "power": "--concentration", "delay": "--delay", "scenario": "--scenario", "timing": "--timing",
    "engine": "--engine", "window_blocks": "--window", "replications": "--replications",
}


def build_config(source: ConfigSource, overrides: dict[str, Any]) -> SimConfig:
    data = dict(source.data)
    for key, value in overrides.items():
        if key == "power" and isinstance(data.get("power"), dict):
            data["power"] = {**data["power"], **value}
        else:
            data[key] = value
    try:
        return SimConfig.from_dict(data)
    except ConfigError as exc:
        key = exc.key
        if key in overrides:
            raise ConfigError(f"{_FLAG_OF.get(key, key)}: {exc}", key) from None
        raise ConfigError(f"{source.locate(key)}{exc}", key) from None


def flag_overrides(args) -> dict[str, Any]:
    """Scalar flag values mapped onto config keys (list values are handled by the sweep)."""
    out: dict[str, Any] = {}
    if args.algorithm is not None:
        out["algorithm"] = args.algorithm
    if args.miners is not None:
        out["miners"] = parse_int(args.miners, "--miners")
    if args.blocks is not None:
        out["block_budget"] = parse_int(args.blocks, "--blocks")
    if args.seed is not None:
        out["seed"] = parse_int(args.seed, "--seed")
    if args.replications is not None:
        out["replications"] = parse_int(args.replications, "--replications")
    if args.k is not None:
        out["selection"] = {"mode": "count", "k": parse_int(args.k, "--k")}
    if args.eta is not None:
        out["selection"] = {"mode": "time_window", "eta": parse_duration(args.eta)}
    if args.all_runnerups:
        out["selection"] = {"mode": "all"}
    if args.timeout is not None:
        out["timeout"] = parse_duration(args.timeout)
    if args.lam is not None:
        out["lambda"] = parse_number(args.lam)
    if args.concentration is not None:
        out["power"] = parse_concentration(args.concentration)
    if args.delay is not None:
        d = parse_duration(args.delay)
        out["delay"] = {"kind": "zero"} if d == 0 else {"kind": "constant", "value": d}
    if args.scenario is not None:
        sc: dict[str, Any] = {"name": args.scenario}
        if args.scenario_epochs:
            sc["epochs"] = [parse_int(v, "--scenario-epochs") for v in parse_values(args.scenario_epochs)]
        out["scenario"] = sc
    for key in ("timing", "engine"):
        if getattr(args, key) is not None:
            out[key] = getattr(args, key)
    if args.window is not None:
        out["window_blocks"] = parse_int(args.window, "--window")
    return out


_SWEEPABLE = {
    "k": "k", "miners": "miners", "eta": "eta", "timeout": "timeout", "seed": "seed", "blocks": "blocks",
    "top_pct": "top_pct", "held_pct": "held_pct", "concentration": "concentration", "lambda": "lam",
    "delay": "delay", "algorithm": "algorithm",
}


def parse_sweep_specs(specs: Sequence[str]) -> list[tuple[str, list[str]]]:
    axes = []
    for spec in specs:
        name, sep, values = spec.partition("=")
        name = name.strip().replace("-", "_")
        if not sep or name not in _SWEEPABLE:
            raise UsageError(f"bad sweep spec {spec!r}; use NAME=VALUES with NAME in {', '.join(sorted(_SWEEPABLE))}")
        vals = parse_values(values)
        axes.append((name, vals))
    return axes


def point_overrides(name: str, value: str) -> dict[str, Any]:
    if name == "k":
        return {"selection": {"mode": "count", "k": int(float(value))}}
    if name == "eta":
        return {"selection": {"mode": "time_window", "eta": parse_duration(value)}}
    if name in ("miners", "seed"):
        return {name: int(float(value))}
    if name == "blocks":
        return {"block_budget": int(float(value))}
    if name == "timeout":
        return {"timeout": parse_duration(value)}
    if name == "delay":
        d = parse_duration(value)
        return {"delay": {"kind": "zero"} if d == 0 else {"kind": "constant", "value": d}}
    if name in ("top_pct", "held_pct"):
        return {"power": {name: parse_number(value)}}
    if name == "concentration":
        return {"power": parse_concentration(value)}
    if name == "lambda":
        return {"lambda": parse_number(value)}
    return {"algorithm": value}


def _merge(a: dict[str, Any], b: dict[str, Any]) -> dict[str, Any]:
    out = dict(a)
    for k, v in b.items():
        if k == "power" and isinstance(out.get("power"), dict):
            out["power"] = {**out["power"], **v}
        else:
            out[k] = v
    return out


# -- artifacts ----------------------------------------------------------------


def artifact_root() -> Path:
    return Path(os.environ.get(ENV_ROOT) or "artifacts")


def config_digest(config: SimConfig) -> str:
    return hashlib.sha256(dumps(config.to_dict()).encode()).hexdigest()[:10]


def default_run_dir(config: SimConfig) -> Path:
    sel = config.selection.label().lower().replace("(", "").replace(")", "")
    return artifact_root() / f"{config.algorithm.value}-n{config.miners}-{sel}-s{config.seed}-{config_digest(config)}"


def manifest(config: SimConfig, outputs: Sequence[str], extra: dict[str, Any] | None = None) -> dict[str, Any]:
    out = {
        "format": MANIFEST_FORMAT,
        "package_version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "outputs": sorted(outputs),
    }
    if extra:
        out.update(extra)
    return out


def write_error_marker(directory: Path, exc: BaseException) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    text = "".join(traceback.format_exception_only(type(exc), exc))
    (directory / "ERROR").write_text(text, encoding="utf-8")


def execute_run(config: SimConfig, directory: Path, workers: int = 1) -> dict[str, Any]:
    """Run all replications of ``config`` and write its artifact directory."""
    directory.mkdir(parents=True, exist_ok=True)
    marker = directory / "ERROR"
    if marker.exists():
        marker.unlink()
    files = ["blocks.csv", "forks.csv", "epochs.csv", "energy.csv", "retarget.csv", "summary.json"]
    (directory / "manifest.json").write_text(dumps(manifest(config, files + ["manifest.json"])), encoding="utf-8")
    try:
        reps = list(range(config.replications))
        if workers > 1 and len(reps) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(reps))) as pool:
                reports = list(pool.map(run_simulation, [config] * len(reps), reps))
        else:
            reports = [run_simulation(config, r) for r in reps]
        write_report_tables(reports, directory)
        summary = aggregate_summary(reports)
        (directory / "summary.json").write_text(dumps(summary), encoding="utf-8")
    except Exception as exc:
        write_error_marker(directory, exc)
        raise
    return summary


def _sweep_worker(job):
    index, config_dict, directory = job
    config = SimConfig.from_dict(config_dict)
    summary = execute_run(config, Path(directory))
    return index, summary


def execute_sweep(
    base: ConfigSource, overrides: dict[str, Any], axes: list[tuple[str, list[str]]], out: Path | None, workers: int
) -> tuple[Path, list[list[Any]], list[str]]:
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        ov = dict(overrides)
        for (name, _), value in zip(axes, combo):
            try:
                ov = _merge(ov, point_overrides(name, value))
            except (ValueError, UsageError) as exc:
                raise UsageError(f"sweep {name}={value}: {exc}") from None
        label = "-".join(f"{name}{value}" for (name, _), value in zip(axes, combo))
        try:
            cfg = build_config(base, ov)
        except ConfigError as exc:
            raise ConfigError(f"sweep point {label}: {exc}", exc.key) from None
        points.append((label, cfg))
    digest = hashlib.sha256("".join(dumps(c.to_dict()) for _, c in points).encode()).hexdigest()[:10]
    root = out if out is not None else artifact_root() / f"sweep-{digest}"
    root.mkdir(parents=True, exist_ok=True)
    jobs = [
        (i, cfg.to_dict(), str(root / f"p{i:03d}-{re.sub(r'[^A-Za-z0-9_.-]', '_', label)}"))
        for i, (label, cfg) in enumerate(points)
    ]
    results: dict[int, dict[str, Any]] = {}
    failures: list[str] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = {pool.submit(_sweep_worker, j): j for j in jobs}
            for fut, job in futures.items():
                try:
                    i, summary = fut.result()
                    results[i] = summary
                except Exception as exc:  # one bad point must not sink the sweep
                    failures.append(f"{Path(job[2]).name}: {exc}")
    else:
        for job in jobs:
            try:
                i, summary = _sweep_worker(job)
                results[i] = summary
            except Exception as exc:
                failures.append(f"{Path(job[2]).name}: {exc}")
    rows = []
    for i, (label, cfg) in enumerate(points):
        if i not in results:
            continue
        agg = results[i]["aggregate"]
        runs = results[i]["runs"]
        rows.append([
            i, cfg.algorithm.value, cfg.miners, cfg.selection.label(), cfg.power.top_pct, cfg.power.held_pct,
            cfg.timeout, cfg.delay.value if cfg.delay.kind == "constant" else 0.0, cfg.seed, cfg.replications,
            sum(r["epochs"] for r in runs), agg["saving_pct"], agg["fork_rate"]["first"],
            agg["fork_rate"]["second"], agg["timeout_epochs"],
            sum(r["mean_runnerups"] for r in runs) / len(runs),
            "" if agg["mean_eta"] is None else agg["mean_eta"], Path(jobs[i][2]).name,
        ])
    write_csv(root / "sweep.csv", SWEEP_HEADER, rows)
    return root, rows, failures


# -- subcommands ---------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file or an emitted manifest.json")
    p.add_argument("--algorithm", choices=["pow", "green_pow"])
    p.add_argument("--miners", help="number of miners, or a list/range to sweep (100,200,300)")
    p.add_argument("--blocks", help="block budget (canonical blocks to produce)")
    p.add_argument("--k", help="runner-up count, or a list/range to sweep")
    p.add_argument("--eta", help="runner-up time window instead of a count, e.g. 30s")
    p.add_argument("--all-runnerups", action="store_true", help="every non-winner mines the second round")
    p.add_argument("--timeout", help="second-round timeout, e.g. 1380s or 23min (default: none)")
    p.add_argument("--lambda", dest="lam", help="block rate per second, e.g. 1/600")
    p.add_argument("--concentration", help="TOP:HELD, e.g. 5:50 = 5%% of miners hold 50%% of the power")
    p.add_argument("--delay", help="constant propagation delay, e.g. 2s")
    p.add_argument("--scenario", help="fault scenario (partition_runnerups)")
    p.add_argument("--scenario-epochs", help="epochs the scenario targets, e.g. 3,10")
    p.add_argument("--timing", choices=["auto", "quantile", "poisson"])
    p.add_argument("--engine", choices=["auto", "event", "epoch"])
    p.add_argument("--window", help="retarget window in blocks per track")
    p.add_argument("--seed")
    p.add_argument("--replications")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", help="artifact directory (default: under $%s)" % ENV_ROOT)


def _list_flags(args) -> list[tuple[str, list[str]]]:
    """List-valued --miners / --k turn a run into a sweep."""
    axes = []
    for name in ("k", "miners", "seed"):
        value = getattr(args, name)
        if value is not None and ("," in value or ".." in value):
            axes.append((name, parse_values(value)))
            setattr(args, name, None)
    return axes


def cmd_run(args) -> int:
    axes = _list_flags(args) + parse_sweep_specs(args.sweep or [])
    source = ConfigSource(args.config)
    overrides = flag_overrides(args)
    out = Path(args.out) if args.out else None
    if axes:
        return _report_sweep(*execute_sweep(source, overrides, axes, out, args.workers))
    config = build_config(source, overrides)
    directory = out if out is not None else default_run_dir(config)
    summary = execute_run(config, directory, args.workers)
    agg = summary["aggregate"]
    print(f"artifacts: {directory}")
    print(f"saving_pct: {agg['saving_pct']:.4f}")
    print(f"fork_rate_first: {agg['fork_rate']['first']:.6f}  fork_rate_second: {agg['fork_rate']['second']:.6f}")
    print(f"timeout_epochs: {agg['timeout_epochs']}")
    return EXIT_OK


def _report_sweep(root: Path, rows, failures) -> int:
    print(f"artifacts: {root}")
    print(f"sweep points: {len(rows)} written to {root / 'sweep.csv'}")
    if failures:
        write_error_marker(root, RuntimeError("; ".join(failures)))
        for f in failures:
            print(f"error: {f}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    axes = _list_flags(args) + parse_sweep_specs(args.param or [])
    if not axes:
        raise UsageError("sweep needs at least one --param NAME=VALUES")
    source = ConfigSource(args.config)
    out = Path(args.out) if args.out else None
    return _report_sweep(*execute_sweep(source, flag_overrides(args), axes, out, args.workers))


def _emit_table(header, rows, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_csv(path, header, rows)
    w = sys.stdout
    w.write(",".join(header) + "\n")
    for row in rows:
        w.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _load_trace(path: str) -> BlockTrace:
    p = Path(path)
    if p.is_dir():
        p = p / "blocks.csv"
    if not p.exists():
        raise UsageError(f"{path}: no such trace or report directory")
    head = p.read_text(encoding="utf-8").split("\n", 1)[0].strip()
    if head == "height,miner_id":
        return BlockTrace.from_csv(p)
    rows = read_csv(p)
    if not rows or "producer" not in rows[0]:
        raise UsageError(f"{p}: expected a height,miner_id trace or a blocks.csv report table")
    rep = rows[0].get("replication")
    rows = [r for r in rows if r.get("replication") == rep]
    return BlockTrace(tuple(int(r["height"]) for r in rows), tuple(r["producer"] for r in rows), p.parent.name)


def cmd_analyze(args) -> int:
    chosen = [n for n, flag in (
        ("timeout_curve", args.timeout_curve), ("shares", args.shares is not None), ("eta_study", args.eta),
        ("fork_probability", args.fork_probability), ("censorship", args.censorship is not None),
    ) if flag]
    name = args.name
    if name is not None:
        name = name.replace("-", "_")
        if name == "eta":
            name = "eta_study"
        if name not in ANALYSES:
            raise UsageError(f"unknown analysis {args.name!r}; valid analyses: {', '.join(ANALYSES)}")
        chosen = [name] + [c for c in chosen if c != name]
    if len(chosen) != 1:
        raise UsageError(f"choose exactly one analysis: {', '.join(ANALYSES)}")
    name = chosen[0]
    if name == "timeout_curve":
        lam = parse_number(args.lam) if args.lam else 1.0 / 600.0
        ps = [parse_number(v) for v in parse_values(args.p or "0.7,0.9")]
        try:
            curve = timeout_curve(MiningRate(lam), ps)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        _emit_table(("p", "wait"), curve.points, args.out)
        print(f"# band [0.7, 0.9]: {curve.band[0]:.4f} .. {curve.band[1]:.4f}", file=sys.stderr)
    elif name == "shares":
        path = args.shares or args.input
        if not path:
            raise UsageError("shares needs a trace file")
        try:
            rows = share_redistribution(
                _load_trace(path), RandomSource(parse_int(args.seed or 0, "--seed"), 7), redistribute=args.redistribute
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        _emit_table(("miner_id", "pow_share_pct", "greenpow_share_pct"), rows, args.out)
    elif name == "eta_study":
        ks = [parse_int(v, "--k") for v in parse_values(args.k or "3,5,10,15,20")]
        lam = parse_number(args.lam) if args.lam else 1.0 / 600.0
        try:
            pts = eta_study(
                ks, miners=parse_int(args.miners or 200, "--miners"), distribution=args.dist,
                epochs=parse_int(args.epochs, "--epochs"),
                lam=lam, seed=parse_int(args.seed or 0, "--seed"),
            )
        except (ValueError, ConfigError) as exc:
            raise UsageError(str(exc)) from None
        _emit_table(("miners", "k", "distribution", "mean_eta_s", "mean_eta_min", "epochs"), pts, args.out)
    elif name == "fork_probability":
        lam = parse_number(args.lam) if args.lam else 1.0 / 600.0
        pbs = [parse_number(v) for v in parse_values(args.p_b)] if args.p_b else [lam]
        scales = [parse_duration(v) for v in parse_values(args.scale or "2")]
        rows = []
        for s in scales:
            try:
                model = UnawareModel(args.form, s)
                rows.extend((args.form, s, pb, fork_probability(model, pb)) for pb in pbs)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        _emit_table(("form", "scale", "p_b", "probability"), rows, args.out)
    else:
        trace = _load_trace(args.censorship or args.input)
        lam = parse_number(args.lam) if args.lam else 1.0 / 600.0
        ks = [parse_int(v, "--k") for v in parse_values(args.k or "1..5")]
        runs = longest_runs(trace)
        rows = []
        for k in ks:
            rows.append((k, censorship_window(k, MiningRate(lam), "pow"),
                         censorship_window(k, MiningRate(lam), "green_pow", trace), max(runs.values())))
        _emit_table(("k", "pow_window", "green_pow_window", "longest_run"), rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenpow", description="Green-PoW simulator and analyses")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one configuration (or a sweep)")
    _add_run_flags(run)
    run.add_argument("--sweep", action="append", metavar="NAME=VALUES", help="sweep axis, e.g. k=1..10")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="cartesian parameter sweep")
    _add_run_flags(sweep)
    sweep.add_argument("--param", action="append", metavar="NAME=VALUES", help="sweep axis, e.g. miners=100,200")
    sweep.set_defaults(func=cmd_sweep)

    an = sub.add_parser("analyze", help="analytic tables and trace analyses")
    an.add_argument("name", nargs="?", help=f"analysis name ({', '.join(ANALYSES)})")
    an.add_argument("input", nargs="?", help="trace file or report directory")
    an.add_argument("--timeout-curve", action="store_true")
    an.add_argument("--shares", metavar="TRACE")
    an.add_argument("--eta", action="store_true")
    an.add_argument("--fork-probability", action="store_true")
    an.add_argument("--censorship", metavar="TRACE_OR_DIR")
    an.add_argument("--lambda", dest="lam", help="rate (per unit of the reported times)")
    an.add_argument("--p", help="probabilities for the timeout curve")
    an.add_argument("--p-b", help="per-unit-time solve probabilities for the fork model")
    an.add_argument("--form", default="exponential", choices=["exponential", "linear", "step"])
    an.add_argument("--scale", help="propagation time constant(s), e.g. 2s")
    an.add_argument("--k", help="runner-up counts or censorship streak lengths")
    an.add_argument("--dist", default="uniform", help="uniform or nonuniform (5%% hold 50%%)")
    an.add_argument("--miners")
    an.add_argument("--epochs", default="10000")
    an.add_argument("--seed")
    an.add_argument("--redistribute", default="proportional", choices=["proportional", "uniform"])
    an.add_argument("--out", help="also write the table to this CSV file")
    an.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"greenpow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("greenpow: interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"greenpow: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
