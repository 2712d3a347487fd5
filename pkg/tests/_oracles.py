"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from the definitions, without
importing the package's computation paths: the step calculator inlines
the latency formulas, the least-squares oracle solves normal equations,
and the rank/accuracy metrics are O(n^2) pair loops.
"""

from __future__ import annotations

import math


def ols_normal_equations(x_rows, y):
    """Solve min ||X b - y|| via (X^T X) b = X^T y with plain Gaussian math."""
    import numpy as np

    x = np.asarray(x_rows, dtype=float)
    yv = np.asarray(y, dtype=float)
    return np.linalg.solve(x.T @ x, x.T @ yv)


def kendall_tau_b(x, y) -> float:
    """Tie-corrected Kendall rank correlation by exhaustive pair counting."""
    n = len(x)
    assert n == len(y) and n >= 2
    concordant = discordant = 0
    ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0:
                ties_x += 1
            if dy == 0:
                ties_y += 1
            if dx == 0 or dy == 0:
                continue
            if (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0:
        return 0.0
    return (concordant - discordant) / denom


def predictor_metrics(pred_lens, true_lens, pred_buckets, true_buckets, reps):
    """Exact/off-by-n accuracy, tau-b and representative RMSE, by brute force."""
    n = len(true_lens)
    exact = off1 = off2 = 0
    sq = 0.0
    for pb, tb, rep, t in zip(pred_buckets, true_buckets, reps, true_lens):
        d = abs(pb - tb)
        exact += d == 0
        off1 += d <= 1
        off2 += d <= 2
        sq += (rep - t) ** 2
    return {
        "exact_acc": exact / n,
        "off_by_1": off1 / n,
        "off_by_2": off2 / n,
        "tau": kendall_tau_b(pred_lens, true_lens),
        "rmse": math.sqrt(sq / n),
    }


def step_calculator_greedy(trace, itl_ms, prefill_ms, cap):
    """Re-derive greedy outcomes step by step from the engine's stated rules.

    ``itl_ms``/``prefill_ms`` are (alpha, beta, gamma, delta) and
    (phi, theta, alpha_p, beta_p) in seconds despite the name; formulas
    are inlined rather than imported.
    """
    alpha, beta, gamma, delta = itl_ms
    phi, theta, alpha_p, beta_p = prefill_ms

    def prefill(n):
        return phi if n <= theta else alpha_p * n + beta_p

    pending = sorted(trace, key=lambda r: (r.arrival_time, r.id))
    waiting = []
    running = []  # [request, tokens_emitted]
    emits = {}
    results = {}
    now = 0.0
    i = 0
    while True:
        while i < len(pending) and pending[i].arrival_time <= now:
            waiting.append(pending[i])
            i += 1
        if not waiting and not running:
            if i < len(pending):
                now = pending[i].arrival_time
                continue
            break
        room = max(0, cap - len(running))
        admitted = waiting[:room]
        waiting = waiting[len(admitted):]
        decode = list(running)
        duration = sum(prefill(r.prompt_len) for r in admitted)
        if decode:
            l_avg = sum(r.prompt_len + tok for r, tok in decode) / len(decode)
            b = len(decode)
            duration += alpha * b * l_avg + beta * b + gamma * l_avg + delta
        end = now + duration
        for r in admitted:
            emits.setdefault(r.id, []).append(end)
            running.append([r, 1])
        for entry in decode:
            entry[1] += 1
            emits[entry[0].id].append(end)
        keep = []
        for r, tok in running:
            if tok >= r.true_output_len:
                e = emits[r.id]
                tpot = 0.0 if len(e) == 1 else (e[-1] - e[0]) / (len(e) - 1)
                results[r.id] = {
                    "ttft": e[0] - r.arrival_time,
                    "tpot": tpot,
                    "completion": end,
                }
            else:
                keep.append([r, tok])
        running = keep
        now = end
    return results
