"""Output-length prediction with bucketized targets.

Schedulers need a scalar guess of how many tokens a request will emit.
Rather than a trained classifier, this module provides an oracle mode
(returns the true length) and a controllable noise mode that perturbs the
true bucket, so prediction error becomes an experiment knob instead of a
model property. Buckets follow either an equal-width grid over
``[1, max_len]`` or empirical quantiles of a training sample.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import kendalltau

from .core import Request

logger = logging.getLogger(__name__)

EQUAL_WIDTH = "equal_width"
EQUAL_FREQUENCY = "equal_frequency"

ORACLE = "oracle"
NOISY_BUCKET = "noisy_bucket"


@dataclass(frozen=True)
class Bucketing:
    """A partition of token lengths into half-open intervals ``(b[k-1], b[k]]``."""

    strategy: str
    num_buckets: int
    max_len: int
    boundaries: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.num_buckets < 1:
            raise ValueError("num_buckets must be >= 1")
        if len(self.boundaries) != self.num_buckets:
            raise ValueError("boundary count must equal num_buckets")
        if any(b <= a for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")

    @classmethod
    def equal_width(cls, num_buckets: int, max_len: int) -> "Bucketing":
        if max_len < num_buckets:
            raise ValueError("max_len must be >= num_buckets")
        bounds = tuple(max_len * k / num_buckets for k in range(1, num_buckets + 1))
        return cls(EQUAL_WIDTH, num_buckets, max_len, bounds)

    @classmethod
    def equal_frequency(cls, num_buckets: int, sample: list[int]) -> "Bucketing":
        """Boundaries at empirical quantiles k/num_buckets of ``sample``."""
        if not sample:
            raise ValueError("equal-frequency bucketing needs a training sample")
        qs = [k / num_buckets for k in range(1, num_buckets + 1)]
        bounds = tuple(float(q) for q in np.quantile(np.asarray(sample, float), qs))
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ValueError(
                "sample too tied for equal-frequency bucketing: duplicate quantiles"
            )
        return cls(EQUAL_FREQUENCY, num_buckets, int(max(sample)), bounds)

    def bucket_of(self, length: int) -> int:
        """Index of the interval containing ``length``; overflow clamps to the last."""
        if length < 1:
            raise ValueError("length must be >= 1")
        if length > self.boundaries[-1]:
            logger.warning(
                "length %d above bucketing range %.0f; clamped to last bucket",
                length,
                self.boundaries[-1],
            )
            return self.num_buckets - 1
        return bisect.bisect_left(self.boundaries, length)

    def representative(self, bucket: int) -> int:
        """Scalar stand-in for a bucket: the interval midpoint, at least 1 token."""
        if not 0 <= bucket < self.num_buckets:
            raise ValueError(f"bucket index {bucket} out of range")
        lo = self.boundaries[bucket - 1] if bucket > 0 else 0.0
        hi = self.boundaries[bucket]
        return max(1, math.ceil((lo + hi) / 2.0))


@dataclass(frozen=True)
class LengthPredictor:
    """Deterministic length predictor: oracle or bucket-noise model.

    Noise draws are keyed on ``(rng_seed, request id)`` so predictions are
    reproducible and independent of evaluation order.
    """

    mode: str
    bucketing: Bucketing
    error_prob: float = 0.0
    error_spread: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (ORACLE, NOISY_BUCKET):
            raise ValueError(f"unknown predictor mode {self.mode!r}")
        if not 0.0 <= self.error_prob <= 1.0:
            raise ValueError("error_prob must be in [0, 1]")
        if self.error_spread < 1:
            raise ValueError("error_spread must be a positive integer")

    def predict(self, req: Request) -> int:
        if self.mode == ORACLE:
            return req.true_output_len
        true_bucket = self.bucketing.bucket_of(req.true_output_len)
        rng = np.random.default_rng([self.rng_seed, req.id])
        bucket = true_bucket
        if rng.random() < self.error_prob:
            shift = int(rng.integers(1, self.error_spread + 1))
            if rng.random() < 0.5:
                shift = -shift
            bucket = min(max(true_bucket + shift, 0), self.bucketing.num_buckets - 1)
        return self.bucketing.representative(bucket)


@dataclass(frozen=True)
class PredictorEval:
    exact_acc: float
    off_by: dict[int, float]
    kendall_tau: float
    rmse_tokens: float


def evaluate(pred: LengthPredictor, requests: list[Request]) -> PredictorEval:
    """Accuracy, rank-correlation and error metrics over a request corpus.

    Bucket-level accuracies compare predicted and true bucket indices;
    Kendall's tau-b correlates raw predicted lengths with true lengths
    (0 when wholly tied); RMSE compares bucket representatives to truth.
    """
    if len(requests) < 2:
        raise ValueError("need at least 2 requests for rank correlation")
    bucketing = pred.bucketing
    preds = [pred.predict(r) for r in requests]
    trues = [r.true_output_len for r in requests]
    pred_buckets = [bucketing.bucket_of(p) for p in preds]
    true_buckets = [bucketing.bucket_of(t) for t in trues]
    n = len(requests)
    diffs = [abs(p - t) for p, t in zip(pred_buckets, true_buckets)]
    exact = sum(1 for d in diffs if d == 0) / n
    off_by = {k: sum(1 for d in diffs if d <= k) / n for k in (1, 2)}
    tau = kendalltau(preds, trues).statistic
    tau = 0.0 if math.isnan(tau) else float(tau)
    reps = [bucketing.representative(b) for b in pred_buckets]
    rmse = math.sqrt(sum((r - t) ** 2 for r, t in zip(reps, trues)) / n)
    return PredictorEval(exact_acc=exact, off_by=off_by, kendall_tau=tau, rmse_tokens=rmse)


def load_corpus(path: str | Path) -> list[Request]:
    """Read a JSONL corpus of ``{prompt_len, output_len}`` rows as requests.

    Arrival times and SLOs are placeholders; only lengths matter for
    predictor evaluation.
    """
    requests: list[Request] = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                requests.append(
                    Request(
                        id=i,
                        arrival_time=0.0,
                        prompt_len=int(row["prompt_len"]),
                        true_output_len=int(row["output_len"]),
                        ttft_slo=1.0,
                        tpot_slo=1.0,
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"corpus line {i + 1}: {exc}") from exc
    return requests


def eval_to_dict(ev: PredictorEval) -> dict:
    return {
        "exact_acc": ev.exact_acc,
        "off_by_1_acc": ev.off_by[1],
        "off_by_2_acc": ev.off_by[2],
        "kendall_tau": ev.kendall_tau,
        "rmse_tokens": ev.rmse_tokens,
    }
