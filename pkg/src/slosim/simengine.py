"""Deterministic discrete-event engine executing scheduling plans.

The engine advances a continuous clock in scheduler iterations. Each
iteration the active policy produces a plan; the step's duration is the
sum of the prefill times of the requests admitted this step plus, when
the decode batch is non-empty, one decode-iteration latency for the batch
(actual member count and mean sequence length). Admitted requests emit
their first token at step end; every decode-batch member emits one token
at step end; requests whose emitted tokens reach their true output length
retire. Arrivals become visible at step boundaries, and the clock skips
idle gaps to the next arrival.

Termination is either a finite horizon (no new step starts at or past it;
stranded requests report as incomplete) or drain. Prediction error never
affects termination: true output lengths end generation, predictions only
steer policy decisions.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import Request, RequestOutcome, Status, compute_tpot, is_compliant
from .costmodel import ItlParams, PrefillParams, itl
from .predictor import LengthPredictor
from .schedtypes import AdmissionRecord, Policy, SchedulerState
from .sched_baselines import (
    EARLY_REJECT,
    GREEDY,
    SJF,
    BaselineConfig,
    EarlyRejectPolicy,
    GreedyPolicy,
    SjfPolicy,
)
from .sched_scorpio import SCORPIO, ScorpioConfig, ScorpioPolicy


class EngineError(RuntimeError):
    """The policy handed back a plan the engine cannot execute."""


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation needs besides the trace itself."""

    policy: str
    itl_params: ItlParams
    prefill_params: PrefillParams
    predictor: LengthPredictor
    scorpio: ScorpioConfig = ScorpioConfig()
    baseline: BaselineConfig = BaselineConfig()
    horizon: float | None = None
    log_decisions: bool = False

    def __post_init__(self) -> None:
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive when finite")


def build_policy(config: SimConfig) -> Policy:
    if config.policy == SCORPIO:
        return ScorpioPolicy(
            config.predictor, config.itl_params, config.prefill_params, config.scorpio
        )
    baseline = BaselineConfig(
        policy=config.policy,
        max_batch_size=config.baseline.max_batch_size,
        prefill_priority=config.baseline.prefill_priority,
    )
    cls = {GREEDY: GreedyPolicy, SJF: SjfPolicy, EARLY_REJECT: EarlyRejectPolicy}[
        config.policy
    ]
    return cls(config.predictor, config.prefill_params, baseline)


@dataclass
class StepRecord:
    step: int
    now_s: float
    end_s: float
    admitted: list[int]
    rejected: list[tuple[int, str]]
    batch: list[int]
    vbs: float
    min_slo_s: float | None
    prefill_s: float
    decode_s: float
    admissions: list[AdmissionRecord] = field(default_factory=list)


@dataclass
class EventLog:
    """Everything observable about a run, for audits and reports."""

    steps: list[StepRecord] = field(default_factory=list)
    token_emits: dict[int, list[float]] = field(default_factory=dict)
    idle_skips: list[tuple[float, float, int]] = field(default_factory=list)
    policy_wall_s: float = 0.0
    engine_wall_s: float = 0.0
    sim_end_s: float = 0.0

    def to_jsonl(self, path: str | Path) -> None:
        """Per-step decision log; admission records carry their full inputs."""
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.steps:
                row = {
                    "step": rec.step,
                    "now_s": rec.now_s,
                    "admitted": rec.admitted,
                    "rejected": [[rid, reason] for rid, reason in rec.rejected],
                    "batch": rec.batch,
                    "vbs": rec.vbs,
                    "min_slo_ms": None
                    if rec.min_slo_s is None
                    else rec.min_slo_s * 1000.0,
                }
                if rec.admissions:
                    row["admissions"] = [
                        {
                            "id": a.candidate_id,
                            "tpot_slo_ms": a.candidate_tpot_slo * 1000.0,
                            "candidate_len": a.candidate_len,
                            "predicted_len": a.predicted_len,
                            "running": [list(t) for t in a.running],
                            "vbs": a.vbs,
                            "l_avg": a.l_avg,
                            "min_slo_ms": a.min_slo * 1000.0,
                            "estimate_ms": a.estimate * 1000.0,
                            "threshold_ms": a.threshold * 1000.0,
                        }
                        for a in rec.admissions
                    ]
                f.write(json.dumps(row) + "\n")


@dataclass(frozen=True)
class OverheadReport:
    """Scheduling-cost accounting in the shape of a serving-system audit.

    ``total_s`` is the simulated serving makespan; ``schedule_s`` and
    ``policy_s`` are host wall-clock time of the whole engine loop and of
    the policy's planning calls alone. The overhead percentage relates
    policy planning time to the serving timeline it would have to hide
    inside.
    """

    total_s: float
    schedule_s: float
    policy_s: float
    overhead_pct: float


def measure_overhead(log: EventLog) -> OverheadReport:
    total = log.sim_end_s
    pct = 0.0 if total <= 0 else log.policy_wall_s / total * 100.0
    return OverheadReport(
        total_s=total,
        schedule_s=log.engine_wall_s,
        policy_s=log.policy_wall_s,
        overhead_pct=pct,
    )


def run(trace: list[Request], config: SimConfig) -> tuple[list[RequestOutcome], EventLog]:
    """Simulate one trace under one policy; deterministic for fixed inputs."""
    for a, b in zip(trace, trace[1:]):
        if b.arrival_time < a.arrival_time:
            raise ValueError("trace must be sorted by arrival time")
    policy = build_policy(config)
    state = SchedulerState()
    log = EventLog()
    by_id = {r.id: r for r in trace}
    if len(by_id) != len(trace):
        raise ValueError("trace contains duplicate request ids")
    outcomes: dict[int, RequestOutcome] = {}
    pending = list(trace)
    next_arrival = 0

    wall_start = time.perf_counter()
    step_idx = 0
    while True:
        while next_arrival < len(pending) and pending[next_arrival].arrival_time <= state.now:
            policy.on_arrival(state, pending[next_arrival])
            next_arrival += 1

        if config.horizon is not None and state.now >= config.horizon:
            break

        plan_start = time.perf_counter()
        plan = policy.plan(state)
        log.policy_wall_s += time.perf_counter() - plan_start

        for item, status in plan.rejected:
            req = item.request
            outcomes[req.id] = RequestOutcome(
                id=req.id,
                status=status,
                ttft_slo=req.ttft_slo,
                tpot_slo=req.tpot_slo,
                category=req.category,
            )

        if not plan.has_work():
            # Nothing is runnable: the next state change is a new arrival or
            # a waiting request crossing its TTFT deadline (which lets the
            # guard resolve it). Deadlines already in the past cannot change
            # anything further.
            future_deadlines = [w.deadline for w in state.waiting if w.deadline > state.now]
            candidates = list(future_deadlines)
            if next_arrival < len(pending):
                candidates.append(pending[next_arrival].arrival_time)
            elif state.running:
                raise EngineError("policy produced no work while requests are running")
            if not candidates:
                if state.waiting:
                    raise EngineError("no progress possible: clock cannot advance")
                break
            target = min(candidates)
            if target <= state.now:
                raise EngineError("no progress possible: clock cannot advance")
            log.idle_skips.append((state.now, target, len(state.waiting)))
            state.now = target
            continue

        batch_ids = {id(e) for e in plan.decode_batch}
        if any(id(e) in batch_ids for e in plan.admitted):
            raise EngineError("plan places a request in both admitted and decode batch")

        prefill_s = sum(e.prefill_s for e in plan.admitted)
        decode_s = 0.0
        if plan.decode_batch:
            l_avg = sum(e.current_len for e in plan.decode_batch) / len(plan.decode_batch)
            decode_s = itl(config.itl_params, len(plan.decode_batch), l_avg)
        end = state.now + prefill_s + decode_s

        for entry in plan.admitted:
            entry.tokens_generated = 1
            log.token_emits.setdefault(entry.request.id, []).append(end)
        for entry in plan.decode_batch:
            entry.tokens_generated += 1
            log.token_emits[entry.request.id].append(end)

        retired = [
            e for e in state.running if e.tokens_generated >= e.request.true_output_len
        ]
        if retired:
            retired_ids = {id(e) for e in retired}
            state.running = [e for e in state.running if id(e) not in retired_ids]
            for entry in retired:
                req = entry.request
                emits = log.token_emits[req.id]
                first = emits[0]
                tpot = compute_tpot(first, emits)
                outcome = RequestOutcome(
                    id=req.id,
                    status=Status.COMPLETED,
                    ttft_slo=req.ttft_slo,
                    tpot_slo=req.tpot_slo,
                    category=req.category,
                    first_token_time=first,
                    completion_time=end,
                    ttft=first - req.arrival_time,
                    tpot=tpot,
                )
                outcomes[req.id] = replace(
                    outcome, slo_compliant=is_compliant(req, outcome)
                )

        log.steps.append(
            StepRecord(
                step=step_idx,
                now_s=state.now,
                end_s=end,
                admitted=[e.request.id for e in plan.admitted],
                rejected=[(i.request.id, s.value) for i, s in plan.rejected],
                batch=[e.request.id for e in plan.decode_batch],
                vbs=plan.vbs,
                min_slo_s=plan.min_slo,
                prefill_s=prefill_s,
                decode_s=decode_s,
                admissions=plan.admissions,
            )
        )
        state.now = end
        step_idx += 1

    log.sim_end_s = state.now
    log.engine_wall_s = time.perf_counter() - wall_start

    for req in trace:
        if req.id not in outcomes:
            outcomes[req.id] = RequestOutcome(
                id=req.id,
                status=Status.INCOMPLETE,
                ttft_slo=req.ttft_slo,
                tpot_slo=req.tpot_slo,
                category=req.category,
            )
    return [outcomes[r.id] for r in trace], log
