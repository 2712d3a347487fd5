"""slosim: discrete-event simulation of SLO-aware LLM serving schedulers."""

from .core import (
    Request,
    RequestOutcome,
    SloCategory,
    SloCategoryTable,
    Status,
    adherence,
    compute_tpot,
    default_slo_table,
    goodput,
    is_compliant,
    relaxed_slo_table,
)
from .costmodel import (
    FitReport,
    ItlParams,
    PrefillParams,
    ProfileSample,
    estimated_tpot,
    estimated_ttft,
    fit_itl,
    fit_prefill,
    fit_quality,
    itl,
    prefill_time,
)
from .predictor import Bucketing, LengthPredictor, PredictorEval, evaluate
from .schedtypes import RunningEntry, SchedulerState, StepPlan, WaitingItem
from .simengine import EventLog, SimConfig, measure_overhead, run
from .workload import Trace, WorkloadSpec, generate, load_trace, rescale_arrivals, save_trace

__version__ = "0.1.0"
