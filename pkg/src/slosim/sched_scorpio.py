"""The scorpio policy: deadline-ordered TTFT guard and credit-based TPOT guard.

The TTFT guard keeps the waiting queue in least-deadline-first order and
rejects requests whose estimated first-token time can no longer meet
their TTFT threshold. The TPOT guard admits a waiting request only if the
projected decode latency of the enlarged running set stays within that
set's strictest TPOT threshold, and then rations decode slots by credits:
each running request earns credit at the ratio of the strictest TPOT
threshold to its own, decodes when its credit reaches 1.0, and pays 1.0
per decode. Over many steps a request's batching frequency converges to
that ratio, so loose-TPOT requests skip iterations and leave headroom for
tight ones.

Batch-size bookkeeping for admission uses the sum of those ratios (the
virtual batch size, VBS) rather than the entry count, since an
intermittently scheduled request loads the engine only fractionally.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .core import Request, Status
from .costmodel import ItlParams, PrefillParams, prefill_time
from .predictor import LengthPredictor
from .schedtypes import (
    AdmissionRecord,
    RunningEntry,
    SchedulerState,
    StepPlan,
    WaitingItem,
)

SCORPIO = "scorpio"

R_PRIME = "r_prime"
R_ONLY = "r_only"


@dataclass(frozen=True)
class ScorpioConfig:
    """Feature toggles; disabling both guards degenerates to FCFS batch-all.

    ``admission_min`` selects whether the admission threshold is the
    strictest TPOT SLO including the candidate (``r_prime``, the default
    and the more conservative form) or over the incumbents only
    (``r_only``, falling back to the candidate's own SLO when the engine
    is empty).
    """

    ttft_guard: bool = True
    tpot_guard: bool = True
    admission_min: str = R_PRIME

    def __post_init__(self) -> None:
        if self.admission_min not in (R_PRIME, R_ONLY):
            raise ValueError(f"unknown admission_min {self.admission_min!r}")


def trp(tpot_slo: float, running_min_slo: float) -> float:
    """Credit-earning rate of a request relative to the strictest running SLO."""
    if tpot_slo <= 0 or running_min_slo <= 0:
        raise ValueError("TPOT SLOs must be positive")
    return running_min_slo / tpot_slo


def vbs(running: list[RunningEntry], min_slo: float) -> float:
    """Effective batch size: sum of credit-earning rates over the set."""
    if not running:
        return 0.0
    return sum(trp(e.request.tpot_slo, min_slo) for e in running)


@lru_cache(maxsize=4096)
def _trp_fraction(min_slo: float, tpot_slo: float) -> Fraction:
    # Exact rational ratio of the two float thresholds; credit sums stay exact.
    return Fraction(min_slo) / Fraction(tpot_slo)


def _admission_math(
    n: int,
    inv_slo_sum: float,
    len_sum: float,
    min_running_slo: float | None,
    candidate_slo: float,
    candidate_len: int,
    predicted_len: int,
    cost: ItlParams,
    admission_min: str,
) -> tuple[bool, float, float, float, float, float]:
    """O(1) admission test given running-set aggregates.

    Returns (ok, vbs, l_avg, min_slo, estimate, threshold); vbs, l_avg and
    min_slo describe the would-be enlarged set.
    """
    if min_running_slo is None or candidate_slo < min_running_slo:
        min_slo = candidate_slo
    else:
        min_slo = min_running_slo
    new_vbs = min_slo * (inv_slo_sum + 1.0 / candidate_slo)
    l_avg = (len_sum + candidate_len) / (n + 1)
    estimate = cost.epsilon * (
        (cost.alpha * new_vbs + cost.gamma) * (l_avg + predicted_len / 2.0)
        + cost.beta * new_vbs
        + cost.delta
    )
    if admission_min == R_ONLY and min_running_slo is not None:
        threshold = min_running_slo
    else:
        threshold = min_slo
    return estimate <= threshold, new_vbs, l_avg, min_slo, estimate, threshold


def _running_aggregates(
    running: list[RunningEntry],
) -> tuple[int, float, float, float | None]:
    n = len(running)
    inv = sum(1.0 / e.request.tpot_slo for e in running)
    lens = sum(e.current_len for e in running)
    min_slo = min((e.request.tpot_slo for e in running), default=None)
    return n, inv, lens, min_slo


def admit(
    state: SchedulerState,
    candidate: Request,
    predicted_len: int,
    cost: ItlParams,
    admission_min: str = R_PRIME,
    prefill_s: float = 0.0,
) -> bool:
    """Admit ``candidate`` into the running set if the TPOT projection allows.

    On admission a running entry is created with zero credit; the caller
    is responsible for removing the request from its waiting queue.
    """
    if predicted_len < 1:
        raise ValueError("predicted_len must be >= 1")
    n, inv, lens, min_running = _running_aggregates(state.running)
    ok, *_ = _admission_math(
        n,
        inv,
        lens,
        min_running,
        candidate.tpot_slo,
        candidate.prompt_len,
        predicted_len,
        cost,
        admission_min,
    )
    if ok:
        state.running.append(
            RunningEntry(request=candidate, predicted_len=predicted_len, prefill_s=prefill_s)
        )
    return ok


def select_batch(
    state: SchedulerState, exclude: set[int] | None = None
) -> list[RunningEntry]:
    """Credit phase: earn at the TPOT ratio, batch at credit >= 1, debit 1.

    ``exclude`` holds ``id()`` values of entries admitted this same step;
    they prefill now and start earning from the next step.
    """
    if not state.running:
        return []
    min_slo = min(e.request.tpot_slo for e in state.running)
    batch: list[RunningEntry] = []
    for entry in state.running:
        if exclude and id(entry) in exclude:
            continue
        entry.credit += _trp_fraction(min_slo, entry.request.tpot_slo)
        if entry.credit >= 1:
            entry.credit -= 1
            batch.append(entry)
    return batch


def ttft_guard(
    state: SchedulerState, cost: PrefillParams
) -> tuple[list[WaitingItem], list[WaitingItem]]:
    """Reorder waiting by deadline and drop requests that can no longer meet it.

    The queue is sorted by (deadline, arrival, id). Walking it front to
    back, each request's earliest possible first token is its elapsed wait
    plus the prefill prefix sum through itself; if that exceeds its TTFT
    threshold the request is removed and its prefill leaves the prefix sum.
    """
    state.waiting.sort(key=operator.attrgetter("sort_key"))
    kept: list[WaitingItem] = []
    rejected: list[WaitingItem] = []
    prefix = 0.0
    now = state.now
    for item in state.waiting:
        elapsed = now - item.request.arrival_time
        estimate = elapsed + prefix + item.prefill_s
        if estimate > item.request.ttft_slo:
            rejected.append(item)
        else:
            prefix += item.prefill_s
            kept.append(item)
    state.waiting = kept
    return kept, rejected


def plan_step(
    state: SchedulerState,
    predictor: LengthPredictor,
    itl_params: ItlParams,
    prefill_params: PrefillParams,
    config: ScorpioConfig = ScorpioConfig(),
) -> StepPlan:
    """One scheduling iteration: TTFT guard, admission scan, credit phase.

    The admission scan visits the whole waiting queue in deadline order;
    blocked candidates stay queued unless they could not be admitted even
    into an empty engine, in which case they are rejected outright, since
    waiting cannot make an intrinsically infeasible TPOT SLO feasible.

    ``predictor`` is part of the policy surface for callers that re-predict
    per step; queue items arrive with predictions attached (see
    ``ScorpioPolicy.on_arrival``), so the cached values are what the scan
    consumes.
    """
    plan = StepPlan()
    if config.ttft_guard:
        _, rejected = ttft_guard(state, prefill_params)
        plan.rejected.extend((item, Status.REJECTED_TTFT) for item in rejected)

    if config.tpot_guard:
        n, inv, lens, min_running = _running_aggregates(state.running)
        still_waiting: list[WaitingItem] = []
        for item in state.waiting:
            req = item.request
            ok, new_vbs, l_avg, min_slo, estimate, threshold = _admission_math(
                n,
                inv,
                lens,
                min_running,
                req.tpot_slo,
                req.prompt_len,
                item.predicted_len,
                itl_params,
                config.admission_min,
            )
            if ok:
                entry = RunningEntry(
                    request=req, predicted_len=item.predicted_len, prefill_s=item.prefill_s
                )
                plan.admissions.append(
                    AdmissionRecord(
                        now=state.now,
                        candidate_id=req.id,
                        candidate_tpot_slo=req.tpot_slo,
                        candidate_len=req.prompt_len,
                        predicted_len=item.predicted_len,
                        running=tuple(
                            (e.request.id, e.request.tpot_slo, e.current_len)
                            for e in state.running
                        ),
                        vbs=new_vbs,
                        l_avg=l_avg,
                        min_slo=min_slo,
                        estimate=estimate,
                        threshold=threshold,
                    )
                )
                state.running.append(entry)
                plan.admitted.append(entry)
                n += 1
                inv += 1.0 / req.tpot_slo
                lens += req.prompt_len
                min_running = min_slo
                continue
            solo_ok, *_ = _admission_math(
                0,
                0.0,
                0.0,
                None,
                req.tpot_slo,
                req.prompt_len,
                item.predicted_len,
                itl_params,
                config.admission_min,
            )
            if not solo_ok:
                plan.rejected.append((item, Status.REJECTED_ADMISSION))
            else:
                still_waiting.append(item)
        state.waiting = still_waiting
    else:
        for item in state.waiting:
            entry = RunningEntry(
                request=item.request,
                predicted_len=item.predicted_len,
                prefill_s=item.prefill_s,
            )
            state.running.append(entry)
            plan.admitted.append(entry)
        state.waiting = []

    fresh = {id(e) for e in plan.admitted}
    if config.tpot_guard:
        plan.decode_batch = select_batch(state, exclude=fresh)
    else:
        plan.decode_batch = [e for e in state.running if id(e) not in fresh]

    if state.running:
        min_slo = min(e.request.tpot_slo for e in state.running)
        plan.min_slo = min_slo
        plan.vbs = vbs(state.running, min_slo)
    return plan


class ScorpioPolicy:
    """Policy adapter binding the guard pipeline to one configuration."""

    def __init__(
        self,
        predictor: LengthPredictor,
        itl_params: ItlParams,
        prefill_params: PrefillParams,
        config: ScorpioConfig = ScorpioConfig(),
    ) -> None:
        self.predictor = predictor
        self.itl_params = itl_params
        self.prefill_params = prefill_params
        self.config = config

    def on_arrival(self, state: SchedulerState, req: Request) -> None:
        state.waiting.append(
            WaitingItem(
                request=req,
                predicted_len=self.predictor.predict(req),
                prefill_s=prefill_time(self.prefill_params, req.prompt_len),
            )
        )

    def plan(self, state: SchedulerState) -> StepPlan:
        return plan_step(
            state, self.predictor, self.itl_params, self.prefill_params, self.config
        )
