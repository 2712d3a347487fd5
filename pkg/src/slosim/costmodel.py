"""Analytic latency models, least-squares fitting, and fit-quality metrics.

Two models drive every scheduling estimate:

* decode: one iteration of a batch of size B with average sequence length
  L costs ``alpha*B*L + beta*B + gamma*L + delta`` seconds. B may be
  fractional (a credit-scheduled batch presents a fractional effective
  size).
* prefill: a prompt of length n costs a constant ``phi`` up to the knee
  ``theta`` and ``alpha_p*n + beta_p`` beyond it.

In-memory parameters are always seconds; the JSON serialization uses
milliseconds (and tokens for ``theta``) so fitted files are readable next
to profiler output.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DECODE = "decode"
PREFILL = "prefill"


@dataclass(frozen=True)
class ItlParams:
    """Coefficients of the decode-iteration latency model (seconds).

    ``epsilon`` is a configured inefficiency cushion (>= 1), applied only
    when projecting TPOT for admission decisions; it is never fitted.
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    epsilon: float = 1.1

    def __post_init__(self) -> None:
        if self.epsilon < 1.0:
            raise ValueError("epsilon must be >= 1.0")


@dataclass(frozen=True)
class PrefillParams:
    """Coefficients of the piecewise prefill latency model (seconds, tokens)."""

    phi: float
    theta: float
    alpha_p: float
    beta_p: float

    def __post_init__(self) -> None:
        if self.phi <= 0:
            raise ValueError("phi must be positive")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.alpha_p * self.theta + self.beta_p < 0:
            raise ValueError("linear regime must be non-negative at theta")


@dataclass(frozen=True)
class ProfileSample:
    """One profiled step: a decode iteration or a prefill pass."""

    kind: str
    batch_size: int
    avg_seq_len: float
    observed_latency: float
    prompt_len: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (DECODE, PREFILL):
            raise ValueError(f"unknown sample kind {self.kind!r}")
        if self.observed_latency <= 0:
            raise ValueError("observed_latency must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kind == PREFILL and self.prompt_len is None:
            raise ValueError("prefill samples need prompt_len")


@dataclass(frozen=True)
class FitReport:
    r2: float
    rmse: float
    mape: float


def itl(params: ItlParams, batch_size: float, avg_len: float) -> float:
    """Latency of one decode iteration (seconds)."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if avg_len <= 0:
        raise ValueError("avg_len must be positive")
    return (
        params.alpha * batch_size * avg_len
        + params.beta * batch_size
        + params.gamma * avg_len
        + params.delta
    )


def estimated_tpot(
    params: ItlParams, vbs: float, avg_len: float, predicted_len: float
) -> float:
    """Projected batch-level TPOT over the next ``predicted_len`` steps.

    Assumes every current request persists for the projection window, with
    the average length advancing by half the window; the result is inflated
    by ``epsilon``.
    """
    if vbs <= 0:
        raise ValueError("vbs must be positive")
    if avg_len <= 0:
        raise ValueError("avg_len must be positive")
    if predicted_len < 1:
        raise ValueError("predicted_len must be >= 1")
    return params.epsilon * (
        (params.alpha * vbs + params.gamma) * (avg_len + predicted_len / 2.0)
        + params.beta * vbs
        + params.delta
    )


def prefill_time(params: PrefillParams, prompt_len: int) -> float:
    """Prefill latency for one prompt (seconds)."""
    if prompt_len < 1:
        raise ValueError("prompt_len must be >= 1")
    if prompt_len <= params.theta:
        return params.phi
    return params.alpha_p * prompt_len + params.beta_p


def estimated_ttft(
    params: PrefillParams, queue_ahead: list[int], elapsed_wait: float
) -> float:
    """Lower bound on a queued request's TTFT.

    ``queue_ahead`` lists the prompt lengths that must prefill before the
    request's own first token, own prompt last. ``elapsed_wait`` is the
    time already spent waiting.
    """
    if not queue_ahead:
        raise ValueError("queue_ahead must include the request's own prompt")
    if elapsed_wait < 0:
        raise ValueError("elapsed_wait must be >= 0")
    return elapsed_wait + sum(prefill_time(params, n) for n in queue_ahead)


def fit_quality(predicted: list[float], observed: list[float]) -> FitReport:
    """R^2, RMSE and MAPE of a prediction series against observations."""
    if len(predicted) != len(observed) or not observed:
        raise ValueError("predicted and observed must be equal-length and non-empty")
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if np.any(obs == 0):
        raise ValueError("MAPE undefined: observed contains zero")
    resid = pred - obs
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res == 0.0:
            r2 = 1.0
        else:
            raise ValueError("observed series is constant; r2 undefined")
    else:
        r2 = 1.0 - ss_res / ss_tot
    rmse = math.sqrt(float(np.mean(resid**2)))
    mape = float(np.mean(np.abs(resid) / np.abs(obs))) * 100.0
    return FitReport(r2=r2, rmse=rmse, mape=mape)


def fit_itl(
    samples: list[ProfileSample], epsilon: float = 1.1
) -> tuple[ItlParams, FitReport]:
    """Ordinary least squares over features {B*L, B, L, 1} on decode samples.

    ``epsilon`` is passed through untouched: it is a configuration input,
    not a fitted quantity.
    """
    decode = [s for s in samples if s.kind == DECODE]
    if len(decode) < 4:
        raise ValueError("need at least 4 decode samples to fit 4 coefficients")
    batches = {s.batch_size for s in decode}
    lens = {s.avg_seq_len for s in decode}
    if len(batches) < 2:
        raise ValueError("decode samples span a single batch size; vary batch_size")
    if len(lens) < 2:
        raise ValueError("decode samples span a single sequence length; vary avg_seq_len")
    b = np.array([s.batch_size for s in decode], dtype=float)
    ln = np.array([s.avg_seq_len for s in decode], dtype=float)
    y = np.array([s.observed_latency for s in decode], dtype=float)
    x = np.column_stack([b * ln, b, ln, np.ones_like(b)])
    if np.linalg.matrix_rank(x) < 4:
        raise ValueError(
            "design matrix is rank-deficient: batch sizes and lengths are collinear"
        )
    coeffs, *_ = np.linalg.lstsq(x, y, rcond=None)
    params = ItlParams(
        alpha=float(coeffs[0]),
        beta=float(coeffs[1]),
        gamma=float(coeffs[2]),
        delta=float(coeffs[3]),
        epsilon=epsilon,
    )
    pred = x @ coeffs
    return params, fit_quality(list(pred), list(y))


def fit_prefill(
    samples: list[ProfileSample], theta: float
) -> tuple[PrefillParams, FitReport]:
    """Fit the piecewise prefill model at a fixed knee ``theta``.

    The constant regime is the mean latency of samples at or below theta;
    the linear regime is OLS over the rest.
    """
    pre = [s for s in samples if s.kind == PREFILL]
    if not pre:
        raise ValueError("no prefill samples")
    low = [s for s in pre if s.prompt_len <= theta]
    high = [s for s in pre if s.prompt_len > theta]
    if not low:
        raise ValueError(f"no prefill samples at or below theta={theta}")
    phi = float(np.mean([s.observed_latency for s in low]))
    if len(high) < 2 or len({s.prompt_len for s in high}) < 2:
        raise ValueError(
            f"linear regime degenerate: need >= 2 distinct prompt lengths above theta={theta}"
        )
    xs = np.array([s.prompt_len for s in high], dtype=float)
    ys = np.array([s.observed_latency for s in high], dtype=float)
    design = np.column_stack([xs, np.ones_like(xs)])
    (alpha_p, beta_p), *_ = np.linalg.lstsq(design, ys, rcond=None)
    params = PrefillParams(
        phi=phi, theta=float(theta), alpha_p=float(alpha_p), beta_p=float(beta_p)
    )
    pred = [prefill_time(params, s.prompt_len) for s in pre]
    obs = [s.observed_latency for s in pre]
    return params, fit_quality(pred, obs)


def sweep_theta(
    samples: list[ProfileSample], candidates: list[float]
) -> tuple[float, PrefillParams, FitReport]:
    """Pick the knee from ``candidates`` that minimizes overall RMSE.

    Candidates that leave a regime degenerate are skipped; ties go to the
    smaller theta.
    """
    if not candidates:
        raise ValueError("no theta candidates")
    best: tuple[float, float, PrefillParams, FitReport] | None = None
    for theta in sorted(candidates):
        try:
            params, report = fit_prefill(samples, theta)
        except ValueError:
            continue
        if best is None or report.rmse < best[0]:
            best = (report.rmse, theta, params, report)
    if best is None:
        raise ValueError("no theta candidate yields a fittable split")
    _, theta, params, report = best
    return theta, params, report


# ---------------------------------------------------------------------------
# Profile CSV and parameter JSON I/O. CSV latencies are milliseconds.

PROFILE_COLUMNS = ["kind", "batch_size", "avg_seq_len", "prompt_len", "latency_ms"]


def load_profile_csv(path: str | Path) -> list[ProfileSample]:
    """Read profiler output; decode rows leave ``prompt_len`` empty."""
    samples: list[ProfileSample] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in PROFILE_COLUMNS:
            if col not in header:
                raise ValueError(f"profile CSV missing column {col!r}")
        for i, row in enumerate(reader, start=2):
            try:
                kind = row["kind"].strip().lower()
                prompt = row["prompt_len"].strip()
                samples.append(
                    ProfileSample(
                        kind=kind,
                        batch_size=int(row["batch_size"]),
                        avg_seq_len=float(row["avg_seq_len"]),
                        observed_latency=float(row["latency_ms"]) / 1000.0,
                        prompt_len=int(prompt) if prompt else None,
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"profile CSV line {i}: {exc}") from exc
    return samples


PARAM_FIELDS = [
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "phi",
    "theta",
    "alpha_p",
    "beta_p",
]


def save_params_json(
    path: str | Path, itl_params: ItlParams, prefill_params: PrefillParams
) -> None:
    """Serialize fitted parameters; latency coefficients in milliseconds."""
    payload = {
        "units": "latency coefficients in ms; theta in tokens; epsilon dimensionless",
        "alpha": itl_params.alpha * 1000.0,
        "beta": itl_params.beta * 1000.0,
        "gamma": itl_params.gamma * 1000.0,
        "delta": itl_params.delta * 1000.0,
        "epsilon": itl_params.epsilon,
        "phi": prefill_params.phi * 1000.0,
        "theta": prefill_params.theta,
        "alpha_p": prefill_params.alpha_p * 1000.0,
        "beta_p": prefill_params.beta_p * 1000.0,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_params_json(path: str | Path) -> tuple[ItlParams, PrefillParams]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    missing = [k for k in PARAM_FIELDS if k not in data]
    if missing:
        raise ValueError(f"params JSON missing fields: {', '.join(missing)}")
    itl_params = ItlParams(
        alpha=data["alpha"] / 1000.0,
        beta=data["beta"] / 1000.0,
        gamma=data["gamma"] / 1000.0,
        delta=data["delta"] / 1000.0,
        epsilon=data["epsilon"],
    )
    prefill_params = PrefillParams(
        phi=data["phi"] / 1000.0,
        theta=data["theta"],
        alpha_p=data["alpha_p"] / 1000.0,
        beta_p=data["beta_p"] / 1000.0,
    )
    return itl_params, prefill_params
