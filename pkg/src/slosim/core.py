"""Domain types and SLO arithmetic for request-level serving simulation.

Times are double-precision seconds on a single simulation clock. Config
files and CSV surfaces express TPOT limits in milliseconds; conversion
happens at the I/O boundary, never inside the arithmetic here.

A request is SLO-compliant when it completes with both TTFT and TPOT at
or below its per-request thresholds (inclusive comparisons). Rejected or
unfinished requests are never compliant but always count in the
adherence denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Status(str, Enum):
    """Terminal state of a request after a simulation run."""

    COMPLETED = "completed"
    REJECTED_TTFT = "rejected_ttft"
    REJECTED_ADMISSION = "rejected_admission"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class Request:
    """One inference job with its per-request latency objectives."""

    id: int
    arrival_time: float
    prompt_len: int
    true_output_len: int
    ttft_slo: float
    tpot_slo: float
    category: int = 0

    def __post_init__(self) -> None:
        if self.prompt_len < 1:
            raise ValueError(f"request {self.id}: prompt_len must be >= 1")
        if self.true_output_len < 1:
            raise ValueError(f"request {self.id}: true_output_len must be >= 1")
        if self.ttft_slo <= 0 or self.tpot_slo <= 0:
            raise ValueError(f"request {self.id}: SLO thresholds must be positive")
        if self.arrival_time < 0:
            raise ValueError(f"request {self.id}: arrival_time must be >= 0")

    @property
    def deadline(self) -> float:
        """Absolute clock time by which the first token is due."""
        return self.arrival_time + self.ttft_slo


@dataclass(frozen=True)
class RequestOutcome:
    """Lifecycle result of one request.

    ``ttft`` and ``tpot`` are present exactly when the request completed.
    ``ttft_slo``/``tpot_slo``/``category`` are copied from the request so
    that an outcome set is self-contained for reporting.
    """

    id: int
    status: Status
    ttft_slo: float
    tpot_slo: float
    category: int = 0
    first_token_time: float | None = None
    completion_time: float | None = None
    ttft: float | None = None
    tpot: float | None = None
    slo_compliant: bool = False


@dataclass(frozen=True)
class SloCategory:
    category: int
    ttft_slo: float
    tpot_slo: float

    def __post_init__(self) -> None:
        if self.ttft_slo <= 0 or self.tpot_slo <= 0:
            raise ValueError(f"category {self.category}: thresholds must be positive")


@dataclass(frozen=True)
class SloCategoryTable:
    """Maps category ids to (TTFT, TPOT) threshold pairs."""

    rows: tuple[SloCategory, ...]

    def __post_init__(self) -> None:
        ids = [r.category for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ValueError("category ids must be distinct")

    def get(self, category: int) -> SloCategory:
        for row in self.rows:
            if row.category == category:
                return row
        raise KeyError(f"unknown SLO category {category}")


def default_slo_table() -> SloCategoryTable:
    """Six-category preset for a small (8B-class) model.

    Category 1 is tight on both axes (interactive code assist), 2-3 are
    tight-TPOT/loose-TTFT (tool calls), 4-5 loose-TPOT/tight-TTFT
    (reading-speed chat), 6 loose on both (summarization).
    """
    return SloCategoryTable(
        rows=(
            SloCategory(1, 0.5, 0.030),
            SloCategory(2, 2.0, 0.030),
            SloCategory(3, 3.0, 0.030),
            SloCategory(4, 0.5, 0.050),
            SloCategory(5, 1.0, 0.050),
            SloCategory(6, 7.5, 0.050),
        )
    )


def relaxed_slo_table() -> SloCategoryTable:
    """Same six categories loosened for a larger (27B-class) model."""
    return SloCategoryTable(
        rows=(
            SloCategory(1, 1.0, 0.060),
            SloCategory(2, 4.0, 0.060),
            SloCategory(3, 6.0, 0.060),
            SloCategory(4, 1.0, 0.100),
            SloCategory(5, 2.0, 0.100),
            SloCategory(6, 15.0, 0.100),
        )
    )


def compute_tpot(first_token_time: float, token_emit_times: list[float]) -> float:
    """Mean inter-token latency over tokens emitted after the first.

    A single-token output has no decode step; its TPOT is defined as 0 so
    it is trivially compliant on that axis.
    """
    if not token_emit_times:
        raise ValueError("no tokens generated")
    if token_emit_times[0] != first_token_time:
        raise ValueError("first emit time must equal first_token_time")
    for a, b in zip(token_emit_times, token_emit_times[1:]):
        if b < a:
            raise ValueError("token emit times must be sorted ascending")
    n = len(token_emit_times)
    if n == 1:
        return 0.0
    return (token_emit_times[-1] - first_token_time) / (n - 1)


def is_compliant(req: Request, outcome: RequestOutcome) -> bool:
    """True iff the request completed within both thresholds (inclusive)."""
    if outcome.id != req.id:
        raise ValueError(f"outcome {outcome.id} does not belong to request {req.id}")
    if outcome.status is not Status.COMPLETED:
        return False
    assert outcome.ttft is not None and outcome.tpot is not None
    return outcome.ttft <= req.ttft_slo and outcome.tpot <= req.tpot_slo


def goodput(outcomes: list[RequestOutcome], horizon: float) -> float:
    """SLO-compliant completions per second over the horizon."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return sum(1 for o in outcomes if o.slo_compliant) / horizon


def adherence(outcomes: list[RequestOutcome]) -> float:
    """Fraction of all issued requests (rejections included) that met SLOs."""
    if not outcomes:
        raise ValueError("adherence undefined for an empty outcome set")
    return sum(1 for o in outcomes if o.slo_compliant) / len(outcomes)
