"""Shared state types for scheduling policies.

The engine owns one ``SchedulerState`` per run and asks the active policy
for a ``StepPlan`` each iteration. Waiting-queue order is policy-defined;
entry objects compare by identity so duplicates with equal fields never
alias each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol

from .core import Request, Status


@dataclass(eq=False)
class WaitingItem:
    """A queued request plus values every policy would otherwise recompute."""

    request: Request
    predicted_len: int
    prefill_s: float
    sort_key: tuple[float, float, int] = field(init=False)

    def __post_init__(self) -> None:
        self.sort_key = (
            self.request.deadline,
            self.request.arrival_time,
            self.request.id,
        )

    @property
    def deadline(self) -> float:
        return self.request.deadline


@dataclass(eq=False)
class RunningEntry:
    """An admitted request mid-generation.

    ``credit`` is exact rational arithmetic: batching eligibility depends
    on comparisons like ``credit >= 1`` after many fractional additions,
    which float accumulation gets wrong at the boundary.
    """

    request: Request
    predicted_len: int
    prefill_s: float
    tokens_generated: int = 0
    credit: Fraction = field(default_factory=lambda: Fraction(0))

    @property
    def current_len(self) -> int:
        """Sequence length as the engine sees it: prompt plus emitted tokens."""
        return self.request.prompt_len + self.tokens_generated


@dataclass
class SchedulerState:
    waiting: list[WaitingItem] = field(default_factory=list)
    running: list[RunningEntry] = field(default_factory=list)
    now: float = 0.0


@dataclass(frozen=True)
class AdmissionRecord:
    """Inputs and result of one admission decision, for post-hoc audit."""

    now: float
    candidate_id: int
    candidate_tpot_slo: float
    candidate_len: int
    predicted_len: int
    running: tuple[tuple[int, float, int], ...]  # (id, tpot_slo, current_len)
    vbs: float
    l_avg: float
    min_slo: float
    estimate: float
    threshold: float


@dataclass
class StepPlan:
    """What one scheduling iteration decided.

    Admitted requests prefill during this step and start decoding from the
    next one, so ``admitted`` and ``decode_batch`` never overlap.
    """

    admitted: list[RunningEntry] = field(default_factory=list)
    decode_batch: list[RunningEntry] = field(default_factory=list)
    rejected: list[tuple[WaitingItem, Status]] = field(default_factory=list)
    vbs: float = 0.0
    min_slo: float | None = None
    admissions: list[AdmissionRecord] = field(default_factory=list)

    def has_work(self) -> bool:
        return bool(self.admitted or self.decode_batch)


class Policy(Protocol):
    """A scheduling policy driven by the simulation engine."""

    def on_arrival(self, state: SchedulerState, req: Request) -> None:
        """Place a newly visible request into the waiting queue."""
        ...

    def plan(self, state: SchedulerState) -> StepPlan:
        """Decide admissions, rejections and the decode batch for one step."""
        ...
