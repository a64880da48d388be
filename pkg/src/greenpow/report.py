"""Simulation reports and their flat-table and JSON forms."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .difficulty import RetargetRecord
from .energy import EnergyLedger
from .protocol import Block, RoundTag
from .stochastic import HashPowerProfile

__all__ = [
    "EpochRecord",
    "ForkRecord",
    "SimReport",
    "TABLES",
    "aggregate_summary",
    "read_csv",
    "write_csv",
    "write_report_tables",
]


@dataclass(frozen=True)
class ForkRecord:
    height: int
    blocks: tuple[int, ...]
    winner: int | None
    round_tag: str


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    first_block: int
    second_block: int
    winner: int
    second_producer: int
    second_tag: RoundTag
    started_at: float
    first_at: float
    second_at: float
    runnerups: tuple[tuple[int, float], ...]
    runnerup_count: int
    timed_out: bool
    e_1st: float
    e_2nd: float
    e_pow_equiv: float

    @property
    def saving_pct(self) -> float:
        if self.e_pow_equiv <= 0:
            return 0.0
        return (self.e_pow_equiv - self.e_1st - self.e_2nd) / self.e_pow_equiv * 100.0

    @property
    def eta(self) -> float | None:
        """Time from the first to the last runner-up announcement (None without runners-up)."""
        if not self.runnerups:
            return None
        return self.runnerups[-1][1] - self.runnerups[0][1]


@dataclass
class SimReport:
    config: Any
    replication: int
    engine: str
    chain: list[Block]
    blocks_produced: int
    forks: list[ForkRecord]
    epochs: list[EpochRecord]
    ledger: EnergyLedger
    retargets: list[RetargetRecord]
    timeout_count: int
    violation_count: int
    end_time: float
    d2_initial: float
    profile: HashPowerProfile
    extra: dict = field(default_factory=dict)

    # aggregates

    @property
    def energy_totals(self) -> tuple[float, float, float]:
        e1 = sum(e.e_1st for e in self.epochs)
        e2 = sum(e.e_2nd for e in self.epochs)
        pe = sum(e.e_pow_equiv for e in self.epochs)
        return e1, e2, pe

    @property
    def saving_pct(self) -> float:
        e1, e2, pe = self.energy_totals
        return (pe - e1 - e2) / pe * 100.0 if pe > 0 else 0.0

    def fork_rates(self) -> dict[str, float]:
        """Share of FIRST (even) and SECOND (odd) heights that saw more than one block."""
        heights = len(self.chain)
        even = (heights + 1) // 2
        odd = heights // 2
        f_even = sum(1 for f in self.forks if f.height % 2 == 0)
        f_odd = sum(1 for f in self.forks if f.height % 2 == 1)
        return {
            "all": len(self.forks) / heights if heights else 0.0,
            "first": f_even / even if even else 0.0,
            "second": f_odd / odd if odd else 0.0,
        }

    def summary(self) -> dict[str, Any]:
        e1, e2, pe = self.energy_totals
        n_ep = len(self.epochs)
        etas = [e.eta for e in self.epochs if e.eta is not None]
        return {
            "replication": self.replication,
            "engine": self.engine,
            "canonical_blocks": len(self.chain),
            "blocks_produced": self.blocks_produced,
            "epochs": n_ep,
            "saving_pct": self.saving_pct,
            "e_1st_total": e1,
            "e_2nd_total": e2,
            "e_pow_equiv_total": pe,
            "mean_block_interval": self.chain[-1].found_at / len(self.chain) if self.chain else 0.0,
            "mean_runnerups": sum(e.runnerup_count for e in self.epochs) / n_ep if n_ep else 0.0,
            "mean_eta": sum(etas) / len(etas) if etas else None,
            "fork_rate": self.fork_rates(),
            "fork_count": len(self.forks),
            "timeout_epochs": sum(1 for e in self.epochs if e.timed_out),
            "timeouts_fired": self.timeout_count,
            "violations": self.violation_count,
            "retargets": len(self.retargets),
            "d2_initial": self.d2_initial,
            "end_time": self.end_time,
        }

    # tables

    def rows(self, table: str) -> list[list[Any]]:
        return _ROW_BUILDERS[table](self)


def _blocks_rows(r: SimReport):
    out = []
    prev = 0.0
    for b in r.chain:
        out.append([r.replication, b.height, b.round_tag.value, b.producer, b.found_at, b.found_at - prev])
        prev = b.found_at
    return out


def _forks_rows(r: SimReport):
    return [
        [r.replication, f.height, f.round_tag, len(f.blocks), "" if f.winner is None else f.winner]
        for f in r.forks
    ]


def _epochs_rows(r: SimReport):
    return [
        [
            r.replication, e.epoch, e.winner, e.second_producer, e.second_tag.value, e.started_at, e.first_at,
            e.second_at, e.runnerup_count, int(e.timed_out), "" if e.eta is None else e.eta,
            ";".join(str(m) for m, _ in e.runnerups),
        ]
        for e in r.epochs
    ]


def _energy_rows(r: SimReport):
    return [[r.replication, e.epoch, e.e_1st, e.e_2nd, e.e_pow_equiv, e.saving_pct] for e in r.epochs]


def _retarget_rows(r: SimReport):
    return [
        [
            r.replication, x.window, x.track, x.d1, x.d2,
            "" if x.t_avg1 is None else x.t_avg1, "" if x.t_avg2 is None else x.t_avg2,
        ]
        for x in r.retargets
    ]


_ROW_BUILDERS = {
    "blocks": _blocks_rows,
    "forks": _forks_rows,
    "epochs": _epochs_rows,
    "energy": _energy_rows,
    "retarget": _retarget_rows,
}

TABLES: dict[str, tuple[str, ...]] = {
    "blocks": ("replication", "height", "round_tag", "producer", "found_at", "interval"),
    "forks": ("replication", "height", "round_tag", "blocks", "winner"),
    "epochs": (
        "replication", "epoch", "winner", "second_producer", "second_tag", "started_at", "first_at",
        "second_at", "runnerup_count", "timeout", "eta", "runnerups",
    ),
    "energy": ("replication", "epoch", "E_1st", "E_2nd", "E_pow_equiv", "saving_pct"),
    "retarget": ("replication", "window", "track", "d1", "d2", "T_avg1", "T_avg2"),
}


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_csv(path: Path, header: Sequence[str] | None = None) -> list[dict[str, str]]:
    """Strict reader: header required (and checked when given), rectangular rows."""
    text = Path(path).read_bytes().decode("utf-8")
    if "\r" in text:
        raise ValueError(f"{path}: CR line endings are not allowed")
    rows = list(csv.reader(io.StringIO(text), strict=True))
    if not rows:
        raise ValueError(f"{path}: missing header row")
    head = [h.strip() for h in rows[0]]
    if header is not None and tuple(head) != tuple(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, found {','.join(head)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(head):
            raise ValueError(f"{path}:{i}: expected {len(head)} fields, found {len(row)}")
        out.append(dict(zip(head, row)))
    return out


def write_report_tables(reports: Sequence[SimReport], directory: Path) -> list[str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, header in TABLES.items():
        rows = [row for r in reports for row in r.rows(name)]
        write_csv(directory / f"{name}.csv", header, rows)
        written.append(f"{name}.csv")
    return written


def aggregate_summary(reports: Sequence[SimReport]) -> dict[str, Any]:
    """Per-run summaries plus pooled metrics (energy ratios of sums, fork rates over all heights)."""
    runs = [r.summary() for r in reports]
    e1 = sum(r.energy_totals[0] for r in reports)
    e2 = sum(r.energy_totals[1] for r in reports)
    pe = sum(r.energy_totals[2] for r in reports)
    heights = sum(len(r.chain) for r in reports)
    even = sum((len(r.chain) + 1) // 2 for r in reports)
    odd = sum(len(r.chain) // 2 for r in reports)
    f_even = sum(1 for r in reports for f in r.forks if f.height % 2 == 0)
    f_odd = sum(1 for r in reports for f in r.forks if f.height % 2 == 1)
    etas = [e.eta for r in reports for e in r.epochs if e.eta is not None]
    return {
        "aggregate": {
            "replications": len(reports),
            "saving_pct": (pe - e1 - e2) / pe * 100.0 if pe > 0 else 0.0,
            "saving_pct_mean": sum(s["saving_pct"] for s in runs) / len(runs),
            "fork_rate": {
                "all": (f_even + f_odd) / heights if heights else 0.0,
                "first": f_even / even if even else 0.0,
                "second": f_odd / odd if odd else 0.0,
            },
            "timeout_epochs": sum(s["timeout_epochs"] for s in runs),
            "mean_eta": sum(etas) / len(etas) if etas else None,
        },
        "runs": runs,
    }


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, infinities as strings, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return None
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj
