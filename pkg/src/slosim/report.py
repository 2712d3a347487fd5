"""Aggregation: run summaries, QPS sweeps, ablation matrices, CSV emission.

Percentiles use the nearest-rank method so golden values are stable.
Plot emission is data-only CSV; rendering belongs to external tools.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from . import core
from .core import RequestOutcome, Status
from .sched_scorpio import SCORPIO, ScorpioConfig
from .seeds import derive_seed
from .simengine import EventLog, OverheadReport, SimConfig, measure_overhead, run
from .workload import Trace, WorkloadSpec, generate, rescale_arrivals


def _nearest_rank(values: list[float], pct: float) -> float:
    # ceil(p/100 * n), 1-indexed
    if not values:
        return float("nan")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


PERCENTILES = (50, 90, 99)


@dataclass(frozen=True)
class RunReport:
    goodput: float
    adherence: float
    horizon: float
    total: int
    compliant: int
    per_category: dict[int, dict[str, float]]
    rejections: dict[str, int]
    status_counts: dict[str, int]
    ttft_violations: int
    tpot_violations: int
    ttft_percentiles_s: dict[int, float]
    tpot_percentiles_ms: dict[int, float]
    cumulative: list[tuple[float, int]]

    def to_dict(self) -> dict:
        return {
            "goodput_rps": self.goodput,
            "adherence": self.adherence,
            "horizon_s": self.horizon,
            "total_requests": self.total,
            "compliant_requests": self.compliant,
            "per_category": {
                str(k): v for k, v in sorted(self.per_category.items())
            },
            "rejections": self.rejections,
            "status_counts": self.status_counts,
            "ttft_violations": self.ttft_violations,
            "tpot_violations": self.tpot_violations,
            "ttft_percentiles_s": {f"p{k}": v for k, v in self.ttft_percentiles_s.items()},
            "tpot_percentiles_ms": {f"p{k}": v for k, v in self.tpot_percentiles_ms.items()},
            "cumulative_slo_met": [[t, n] for t, n in self.cumulative],
        }


def summarize(outcomes: list[RequestOutcome], horizon: float) -> RunReport:
    """Aggregate one run's outcomes into the standard report."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    total = len(outcomes)
    compliant = sum(1 for o in outcomes if o.slo_compliant)
    adherence = core.adherence(outcomes) if outcomes else 0.0
    goodput = core.goodput(outcomes, horizon)

    per_category: dict[int, dict[str, float]] = {}
    for o in outcomes:
        bucket = per_category.setdefault(
            o.category, {"total": 0, "compliant": 0, "adherence": 0.0}
        )
        bucket["total"] += 1
        bucket["compliant"] += 1 if o.slo_compliant else 0
    for bucket in per_category.values():
        bucket["adherence"] = bucket["compliant"] / bucket["total"]

    rejections = {
        Status.REJECTED_TTFT.value: sum(
            1 for o in outcomes if o.status is Status.REJECTED_TTFT
        ),
        Status.REJECTED_ADMISSION.value: sum(
            1 for o in outcomes if o.status is Status.REJECTED_ADMISSION
        ),
    }
    status_counts: dict[str, int] = {}
    for o in outcomes:
        status_counts[o.status.value] = status_counts.get(o.status.value, 0) + 1

    completed = [o for o in outcomes if o.status is Status.COMPLETED]
    ttft_violations = sum(1 for o in completed if o.ttft > o.ttft_slo)
    tpot_violations = sum(1 for o in completed if o.tpot > o.tpot_slo)
    ttfts = [o.ttft for o in completed]
    tpots_ms = [o.tpot * 1000.0 for o in completed]
    ttft_pcts = {p: _nearest_rank(ttfts, p) for p in PERCENTILES}
    tpot_pcts = {p: _nearest_rank(tpots_ms, p) for p in PERCENTILES}

    times = sorted(o.completion_time for o in outcomes if o.slo_compliant)
    cumulative = [(t, i + 1) for i, t in enumerate(times)]

    return RunReport(
        goodput=goodput,
        adherence=adherence,
        horizon=horizon,
        total=total,
        compliant=compliant,
        per_category=per_category,
        rejections=rejections,
        status_counts=status_counts,
        ttft_violations=ttft_violations,
        tpot_violations=tpot_violations,
        ttft_percentiles_s=ttft_pcts,
        tpot_percentiles_ms=tpot_pcts,
        cumulative=cumulative,
    )


def report_horizon(config_horizon: float | None, log: EventLog) -> float:
    """Finite configured horizon, else the simulated makespan."""
    if config_horizon is not None:
        return config_horizon
    return max(log.sim_end_s, 1e-12)


@dataclass(frozen=True)
class SweepCell:
    qps: float
    policy: str
    report: RunReport
    overhead: OverheadReport


@dataclass(frozen=True)
class SweepReport:
    qps_values: tuple[float, ...]
    policies: tuple[str, ...]
    cells: dict[tuple[float, str], SweepCell]
    goodput_ratios: dict[tuple[float, str, str], float]

    def to_dict(self) -> dict:
        return {
            "qps_values": list(self.qps_values),
            "policies": list(self.policies),
            "cells": {
                f"{qps}:{policy}": cell.report.to_dict()
                for (qps, policy), cell in sorted(self.cells.items())
            },
            "goodput_ratios": {
                f"{qps}:{a}/{b}": ratio
                for (qps, a, b), ratio in sorted(self.goodput_ratios.items())
            },
        }


def _trace_for_qps(
    source: WorkloadSpec | Trace, qps: float, base_seed: int
) -> Trace:
    if isinstance(source, WorkloadSpec):
        spec = replace(source, qps=qps, seed=derive_seed(base_seed, "trace", qps))
        return generate(spec)
    if not source:
        return []
    span = source[-1].arrival_time
    native_qps = len(source) / span if span > 0 else float(len(source))
    return rescale_arrivals(source, qps / native_qps)


def sweep(
    source: WorkloadSpec | Trace,
    qps_list: list[float],
    policies: list[str],
    config: SimConfig,
    base_seed: int = 0,
) -> SweepReport:
    """One run per (qps, policy) cell on a shared per-qps trace.

    The trace for a given QPS is identical across policies so cells are
    comparable; only policy-internal randomness may differ per cell.
    """
    if not qps_list or not policies:
        raise ValueError("need at least one QPS value and one policy")
    cells: dict[tuple[float, str], SweepCell] = {}
    for qps in qps_list:
        trace = _trace_for_qps(source, qps, base_seed)
        for policy in policies:
            cell_config = replace(config, policy=policy)
            outcomes, log = run(trace, cell_config)
            horizon = report_horizon(cell_config.horizon, log)
            cells[(qps, policy)] = SweepCell(
                qps=qps,
                policy=policy,
                report=summarize(outcomes, horizon),
                overhead=measure_overhead(log),
            )
    ratios: dict[tuple[float, str, str], float] = {}
    for qps in qps_list:
        for a in policies:
            for b in policies:
                if a == b:
                    continue
                denom = cells[(qps, b)].report.goodput
                if denom > 0:
                    ratios[(qps, a, b)] = cells[(qps, a)].report.goodput / denom
    return SweepReport(
        qps_values=tuple(qps_list),
        policies=tuple(policies),
        cells=cells,
        goodput_ratios=ratios,
    )


ABLATION_CONFIGS = {
    "neither": ScorpioConfig(ttft_guard=False, tpot_guard=False),
    "ttft_only": ScorpioConfig(ttft_guard=True, tpot_guard=False),
    "tpot_only": ScorpioConfig(ttft_guard=False, tpot_guard=True),
    "both": ScorpioConfig(ttft_guard=True, tpot_guard=True),
}


def ablation(trace: Trace, config: SimConfig) -> dict[str, RunReport]:
    """Run the four guard on/off combinations on one identical trace."""
    results: dict[str, RunReport] = {}
    for name, scorpio_config in ABLATION_CONFIGS.items():
        cell = replace(
            config,
            policy=SCORPIO,
            scorpio=replace(scorpio_config, admission_min=config.scorpio.admission_min),
        )
        outcomes, log = run(trace, cell)
        results[name] = summarize(outcomes, report_horizon(cell.horizon, log))
    return results


# ---------------------------------------------------------------------------
# Plot-ready CSV emission (data only).


def write_goodput_csv(sweep_report: SweepReport, path: str | Path) -> None:
    """Goodput/adherence vs QPS, one row per (qps, policy) cell."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["qps", "policy", "goodput_rps", "adherence"])
        for (qps, policy), cell in sorted(sweep_report.cells.items()):
            writer.writerow([qps, policy, cell.report.goodput, cell.report.adherence])


def write_cumulative_csv(
    runs: dict[str, RunReport], path: str | Path, qps: float | None = None
) -> None:
    """Cumulative SLO-met counts over time, one row per compliant completion."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["policy", "qps", "time_s", "cumulative_slo_met"])
        for policy, report in sorted(runs.items()):
            for t, n in report.cumulative:
                writer.writerow([policy, "" if qps is None else qps, t, n])


def write_ablation_csv(matrix: dict[str, RunReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "config",
                "goodput_rps",
                "adherence",
                "ttft_violations",
                "tpot_violations",
                "rejected_ttft",
                "rejected_admission",
            ]
        )
        for name in ("neither", "ttft_only", "tpot_only", "both"):
            if name not in matrix:
                continue
            r = matrix[name]
            writer.writerow(
                [
                    name,
                    r.goodput,
                    r.adherence,
                    r.ttft_violations,
                    r.tpot_violations,
                    r.rejections[Status.REJECTED_TTFT.value],
                    r.rejections[Status.REJECTED_ADMISSION.value],
                ]
            )


def write_report_json(report: RunReport, path: str | Path, extra: dict | None = None) -> None:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_outcomes_csv(outcomes: list[RequestOutcome], path: str | Path) -> None:
    """Per-request results: id,status,ttft_s,tpot_ms,compliant,category."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "status", "ttft_s", "tpot_ms", "compliant", "category"])
        for o in outcomes:
            writer.writerow(
                [
                    o.id,
                    o.status.value,
                    "" if o.ttft is None else repr(o.ttft),
                    "" if o.tpot is None else repr(o.tpot * 1000.0),
                    int(o.slo_compliant),
                    o.category,
                ]
            )
