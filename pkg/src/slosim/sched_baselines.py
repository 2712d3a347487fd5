"""Throughput-oriented comparison policies sharing the StepPlan interface.

* greedy: FCFS admission up to a batch-size cap, every running request
  decodes every step, nothing is ever rejected.
* sjf: greedy with the waiting queue ordered by predicted output length.
* early_reject: greedy plus first-token-time rejection: a waiting
  request whose prefill prefix sum (plus elapsed wait) already exceeds
  its TTFT threshold is dropped instead of queued forever.

All three run on the same engine and cost model as scorpio; only the
planning logic differs.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .core import Request, Status
from .costmodel import PrefillParams, prefill_time
from .predictor import LengthPredictor
from .schedtypes import RunningEntry, SchedulerState, StepPlan, WaitingItem

GREEDY = "greedy"
SJF = "sjf"
EARLY_REJECT = "early_reject"


@dataclass(frozen=True)
class BaselineConfig:
    """Shared knobs: admission cap and vLLM-style prefill prioritization.

    With ``prefill_priority`` the decode batch is skipped on any step that
    admits new requests, mimicking schedulers that stall decodes to run
    prefills; off by default so every running request decodes every step.
    """

    policy: str = GREEDY
    max_batch_size: int = 256
    prefill_priority: bool = False

    def __post_init__(self) -> None:
        if self.policy not in (GREEDY, SJF, EARLY_REJECT):
            raise ValueError(f"unknown baseline policy {self.policy!r}")
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")


def _admit_fcfs(state: SchedulerState, config: BaselineConfig, plan: StepPlan) -> None:
    room = config.max_batch_size - len(state.running)
    take = min(room, len(state.waiting)) if room > 0 else 0
    for item in state.waiting[:take]:
        entry = RunningEntry(
            request=item.request,
            predicted_len=item.predicted_len,
            prefill_s=item.prefill_s,
        )
        state.running.append(entry)
        plan.admitted.append(entry)
    del state.waiting[:take]


def _decode_all(state: SchedulerState, config: BaselineConfig, plan: StepPlan) -> None:
    if config.prefill_priority and plan.admitted:
        return
    fresh = {id(e) for e in plan.admitted}
    plan.decode_batch = [e for e in state.running if id(e) not in fresh]


def plan_greedy(state: SchedulerState, config: BaselineConfig) -> StepPlan:
    """Admit FCFS until the cap, decode everything, reject nothing."""
    plan = StepPlan()
    _admit_fcfs(state, config, plan)
    _decode_all(state, config, plan)
    return plan


def plan_sjf(
    state: SchedulerState, config: BaselineConfig, predictor: LengthPredictor
) -> StepPlan:
    """Greedy over a queue ordered by predicted output length.

    Ordering is maintained at insertion time (ties fall back to arrival
    then id), so planning is identical to greedy.
    """
    return plan_greedy(state, config)


def plan_early_reject(
    state: SchedulerState, config: BaselineConfig, prefill_params: PrefillParams
) -> StepPlan:
    """Greedy with admission-time TTFT rejection over the FCFS queue."""
    plan = StepPlan()
    kept: list[WaitingItem] = []
    prefix = 0.0
    for item in state.waiting:
        elapsed = state.now - item.request.arrival_time
        if elapsed + prefix + item.prefill_s > item.request.ttft_slo:
            plan.rejected.append((item, Status.REJECTED_TTFT))
        else:
            prefix += item.prefill_s
            kept.append(item)
    state.waiting = kept
    _admit_fcfs(state, config, plan)
    _decode_all(state, config, plan)
    return plan


class GreedyPolicy:
    def __init__(
        self, predictor: LengthPredictor, prefill_params: PrefillParams,
        config: BaselineConfig = BaselineConfig(),
    ) -> None:
        self.predictor = predictor
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
        return plan_greedy(state, self.config)


class SjfPolicy(GreedyPolicy):
    def on_arrival(self, state: SchedulerState, req: Request) -> None:
        item = WaitingItem(
            request=req,
            predicted_len=self.predictor.predict(req),
            prefill_s=prefill_time(self.prefill_params, req.prompt_len),
        )
        bisect.insort(
            state.waiting,
            item,
            key=lambda w: (w.predicted_len, w.request.arrival_time, w.request.id),
        )

    def plan(self, state: SchedulerState) -> StepPlan:
        return plan_sjf(state, self.config, self.predictor)


class EarlyRejectPolicy(GreedyPolicy):
    def plan(self, state: SchedulerState) -> StepPlan:
        return plan_early_reject(state, self.config, self.prefill_params)
