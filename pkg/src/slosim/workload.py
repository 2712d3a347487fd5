"""Synthetic workload generation and trace I/O.

Synthetic arrivals are Poisson (exponential inter-arrival gaps at the
configured QPS); lengths come from per-field distributions; SLOs are
looked up from a category table using weighted category sampling. Traces
serialize as JSONL with explicit per-request SLOs so a trace file is
self-contained; the category id rides along as metadata.

Draw order per request is fixed (gap, category, prompt, output) so a
given seed always reproduces the same trace byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Request, SloCategoryTable, default_slo_table

Trace = list[Request]


@dataclass(frozen=True)
class LogNormalDist:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class UniformDist:
    low: int
    high: int

    def __post_init__(self) -> None:
        if self.low < 1 or self.high < self.low:
            raise ValueError("need 1 <= low <= high")


@dataclass(frozen=True)
class EmpiricalDist:
    """Samples uniformly with replacement from observed lengths."""

    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("empirical distribution needs at least one value")
        if any(v < 1 for v in self.values):
            raise ValueError("empirical lengths must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "EmpiricalDist":
        values = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    values.append(int(line))
        return cls(tuple(values))


LengthDist = LogNormalDist | UniformDist | EmpiricalDist


def sample_length(dist: LengthDist, rng: np.random.Generator) -> int:
    if isinstance(dist, LogNormalDist):
        return max(1, int(round(rng.lognormal(dist.mu, dist.sigma))))
    if isinstance(dist, UniformDist):
        return int(rng.integers(dist.low, dist.high + 1))
    if isinstance(dist, EmpiricalDist):
        return int(dist.values[rng.integers(0, len(dist.values))])
    raise TypeError(f"unknown length distribution {type(dist)!r}")


@dataclass(frozen=True)
class WorkloadSpec:
    qps: float
    duration: float
    seed: int
    prompt_len_dist: LengthDist
    output_len_dist: LengthDist
    category_weights: tuple[float, ...]
    slo_table: SloCategoryTable | None = None

    def __post_init__(self) -> None:
        if self.qps <= 0:
            raise ValueError("qps must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if any(w < 0 for w in self.category_weights):
            raise ValueError("category weights must be non-negative")
        if sum(self.category_weights) <= 0:
            raise ValueError("category weights must sum to a positive value")

    def table(self) -> SloCategoryTable:
        return self.slo_table if self.slo_table is not None else default_slo_table()


def generate(spec: WorkloadSpec) -> Trace:
    """Sample a trace from the spec; deterministic for a given seed."""
    table = spec.table()
    if len(spec.category_weights) != len(table.rows):
        raise ValueError("one weight per SLO category required")
    rng = np.random.default_rng(spec.seed)
    weights = np.asarray(spec.category_weights, dtype=float)
    probs = weights / weights.sum()
    trace: Trace = []
    t = 0.0
    req_id = 0
    while True:
        t += rng.exponential(1.0 / spec.qps)
        if t > spec.duration:
            break
        row = table.rows[int(rng.choice(len(probs), p=probs))]
        prompt = sample_length(spec.prompt_len_dist, rng)
        output = sample_length(spec.output_len_dist, rng)
        trace.append(
            Request(
                id=req_id,
                arrival_time=t,
                prompt_len=prompt,
                true_output_len=output,
                ttft_slo=row.ttft_slo,
                tpot_slo=row.tpot_slo,
                category=row.category,
            )
        )
        req_id += 1
    return trace


def rescale_arrivals(trace: Trace, factor: float) -> Trace:
    """Divide all arrival times by ``factor`` (>1 compresses time, raising load)."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    return [
        Request(
            id=r.id,
            arrival_time=r.arrival_time / factor,
            prompt_len=r.prompt_len,
            true_output_len=r.true_output_len,
            ttft_slo=r.ttft_slo,
            tpot_slo=r.tpot_slo,
            category=r.category,
        )
        for r in trace
    ]


# ---------------------------------------------------------------------------
# Trace JSONL format: one request per line, SLOs inline (TPOT in ms).

def save_trace(trace: Trace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in trace:
            f.write(
                json.dumps(
                    {
                        "id": r.id,
                        "arrival_s": r.arrival_time,
                        "prompt_len": r.prompt_len,
                        "output_len": r.true_output_len,
                        "ttft_slo_s": r.ttft_slo,
                        "tpot_slo_ms": r.tpot_slo * 1000.0,
                        "category": r.category,
                    }
                )
                + "\n"
            )


def load_trace(path: str | Path) -> Trace:
    trace: Trace = []
    seen_ids: set[int] = set()
    last_arrival = -float("inf")
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                req = Request(
                    id=int(row["id"]),
                    arrival_time=float(row["arrival_s"]),
                    prompt_len=int(row["prompt_len"]),
                    true_output_len=int(row["output_len"]),
                    ttft_slo=float(row["ttft_slo_s"]),
                    tpot_slo=float(row["tpot_slo_ms"]) / 1000.0,
                    category=int(row.get("category", 0)),
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"trace line {i}: {exc}") from exc
            if req.id in seen_ids:
                raise ValueError(f"trace line {i}: duplicate request id {req.id}")
            if req.arrival_time < last_arrival:
                raise ValueError(
                    f"trace line {i}: arrival {req.arrival_time} precedes previous "
                    f"arrival {last_arrival}"
                )
            seen_ids.add(req.id)
            last_arrival = req.arrival_time
            trace.append(req)
    return trace


def convert_csv(
    path: str | Path,
    column_map: dict[str, str],
    slo_table: SloCategoryTable | None = None,
    category: int | None = None,
    category_weights: tuple[float, ...] | None = None,
    seed: int = 0,
) -> Trace:
    """Convert a generic (timestamp, prompt tokens, output tokens) CSV.

    ``column_map`` must provide the source column names under the keys
    ``timestamp``, ``prompt`` and ``output``. SLOs are assigned either
    from a fixed ``category`` or sampled by ``category_weights``.
    """
    for key in ("timestamp", "prompt", "output"):
        if key not in column_map:
            raise ValueError(f"column map missing {key!r}")
    table = slo_table if slo_table is not None else default_slo_table()
    if category is None and category_weights is None:
        category = table.rows[0].category
    rng = np.random.default_rng(seed)
    probs = None
    if category_weights is not None:
        w = np.asarray(category_weights, dtype=float)
        if len(w) != len(table.rows) or w.sum() <= 0:
            raise ValueError("category weights must match the SLO table")
        probs = w / w.sum()
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for key, col in column_map.items():
            if col not in header:
                raise ValueError(f"CSV missing column {col!r} (mapped from {key})")
        for i, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (
                        float(row[column_map["timestamp"]]),
                        int(row[column_map["prompt"]]),
                        int(row[column_map["output"]]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"CSV line {i}: {exc}") from exc
    rows.sort(key=lambda t: t[0])
    base = rows[0][0] if rows else 0.0
    trace: Trace = []
    for req_id, (ts, prompt, output) in enumerate(rows):
        if probs is not None:
            slo_row = table.rows[int(rng.choice(len(probs), p=probs))]
        else:
            slo_row = table.get(category)
        trace.append(
            Request(
                id=req_id,
                arrival_time=ts - base,
                prompt_len=max(1, prompt),
                true_output_len=max(1, output),
                ttft_slo=slo_row.ttft_slo,
                tpot_slo=slo_row.tpot_slo,
                category=slo_row.category,
            )
        )
    return trace
