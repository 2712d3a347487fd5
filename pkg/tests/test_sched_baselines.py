from __future__ import annotations

from slosim.core import Request, Status
from slosim.costmodel import ItlParams, PrefillParams
from slosim.predictor import Bucketing, LengthPredictor
from slosim.schedtypes import RunningEntry, SchedulerState, WaitingItem
from slosim.sched_baselines import (
    BaselineConfig,
    SjfPolicy,
    plan_early_reject,
    plan_greedy,
)
from slosim.simengine import SimConfig, run
from slosim.workload import LogNormalDist, UniformDist, WorkloadSpec, generate


def req(i, arrival=0.0, prompt=50, output=5, ttft_slo=5.0, tpot_slo=0.05):
    return Request(
        id=i, arrival_time=arrival, prompt_len=prompt, true_output_len=output,
        ttft_slo=ttft_slo, tpot_slo=tpot_slo,
    )


def waiting(r, predicted=5):
    return WaitingItem(request=r, predicted_len=predicted, prefill_s=0.02)


def running(r):
    e = RunningEntry(request=r, predicted_len=5, prefill_s=0.02)
    e.tokens_generated = 1
    return e


class TestGreedy:
    def test_batches_every_running_entry(self):
        state = SchedulerState()
        state.running = [running(req(i)) for i in range(6)]
        plan = plan_greedy(state, BaselineConfig(max_batch_size=8))
        assert len(plan.decode_batch) == 6
        assert plan.rejected == []

    def test_overflow_stays_waiting_fcfs(self):
        state = SchedulerState()
        state.running = [running(req(i)) for i in range(3)]
        state.waiting = [waiting(req(10 + i, arrival=float(i))) for i in range(5)]
        plan = plan_greedy(state, BaselineConfig(max_batch_size=4))
        assert [e.request.id for e in plan.admitted] == [10]
        assert [w.request.id for w in state.waiting] == [11, 12, 13, 14]

    def test_never_rejects(self):
        state = SchedulerState(now=100.0)
        state.waiting = [waiting(req(0, ttft_slo=0.01))]  # hopelessly late
        plan = plan_greedy(state, BaselineConfig(max_batch_size=1))
        assert plan.rejected == []
        assert [e.request.id for e in plan.admitted] == [0]

    def test_prefill_priority_defers_decode(self):
        state = SchedulerState()
        state.running = [running(req(0))]
        state.waiting = [waiting(req(1))]
        plan = plan_greedy(state, BaselineConfig(prefill_priority=True))
        assert [e.request.id for e in plan.admitted] == [1]
        assert plan.decode_batch == []
        # with nothing to admit, decode resumes
        plan2 = plan_greedy(state, BaselineConfig(prefill_priority=True))
        assert len(plan2.decode_batch) == 2


class TestSjf:
    def _policy(self):
        pred = LengthPredictor(mode="oracle", bucketing=Bucketing.equal_width(10, 1000))
        pp = PrefillParams(phi=0.02, theta=128, alpha_p=1e-4, beta_p=7e-3)
        return SjfPolicy(pred, pp, BaselineConfig(policy="sjf", max_batch_size=2))

    def test_orders_by_predicted_length(self):
        policy = self._policy()
        state = SchedulerState()
        policy.on_arrival(state, req(0, output=300))
        policy.on_arrival(state, req(1, output=50))
        assert [w.request.id for w in state.waiting] == [1, 0]
        plan = policy.plan(state)
        assert [e.request.id for e in plan.admitted] == [1, 0]

    def test_ties_fall_back_to_fcfs(self):
        policy = self._policy()
        state = SchedulerState()
        policy.on_arrival(state, req(3, arrival=0.0, output=100))
        policy.on_arrival(state, req(1, arrival=0.5, output=100))
        policy.on_arrival(state, req(2, arrival=0.25, output=100))
        assert [w.request.id for w in state.waiting] == [3, 2, 1]

    def test_oracle_gives_true_sjf(self):
        policy = self._policy()
        state = SchedulerState()
        lengths = [40, 7, 99, 23]
        for i, n in enumerate(lengths):
            policy.on_arrival(state, req(i, output=n))
        assert [w.predicted_len for w in state.waiting] == sorted(lengths)


class TestEarlyReject:
    def test_light_load_equals_greedy(self):
        state = SchedulerState()
        state.waiting = [waiting(req(i)) for i in range(3)]
        pp = PrefillParams(phi=0.02, theta=128, alpha_p=1e-4, beta_p=7e-3)
        plan = plan_early_reject(state, BaselineConfig(), pp)
        assert len(plan.admitted) == 3
        assert plan.rejected == []

    def test_deep_queue_tail_rejected(self):
        pp = PrefillParams(phi=1.0, theta=10_000, alpha_p=0.0, beta_p=0.0)
        state = SchedulerState()
        # 5 requests x 1s prefill; the 4th and 5th cannot make a 3.5s budget
        state.waiting = [
            WaitingItem(request=req(i, ttft_slo=3.5), predicted_len=5, prefill_s=1.0)
            for i in range(5)
        ]
        plan = plan_early_reject(state, BaselineConfig(max_batch_size=0 + 256), pp)
        assert [w.request.id for w, _ in plan.rejected] == [3, 4]
        assert all(s is Status.REJECTED_TTFT for _, s in plan.rejected)

    def test_elapsed_past_deadline_rejected(self):
        pp = PrefillParams(phi=0.02, theta=128, alpha_p=1e-4, beta_p=7e-3)
        state = SchedulerState(now=10.0)
        state.waiting = [waiting(req(0, arrival=0.0, ttft_slo=5.0))]
        plan = plan_early_reject(state, BaselineConfig(), pp)
        assert [w.request.id for w, _ in plan.rejected] == [0]


def _mixed_spec(seed=13, qps=6.0):
    return WorkloadSpec(
        qps=qps,
        duration=40.0,
        seed=seed,
        prompt_len_dist=UniformDist(20, 200),
        output_len_dist=LogNormalDist(3.2, 0.8),
        category_weights=(1.0,) * 6,
    )


def _sim(policy, trace, cap=4, prefill_priority=False):
    ip = ItlParams(alpha=1e-6, beta=1e-3, gamma=1e-5, delta=5e-3, epsilon=1.0)
    pp = PrefillParams(phi=0.02, theta=128, alpha_p=1e-4, beta_p=7e-3)
    pred = LengthPredictor(mode="oracle", bucketing=Bucketing.equal_width(100, 2000))
    config = SimConfig(
        policy=policy, itl_params=ip, prefill_params=pp, predictor=pred,
        baseline=BaselineConfig(
            policy="greedy", max_batch_size=cap, prefill_priority=prefill_priority
        ),
    )
    return run(trace, config)


class TestCrossPolicyProperties:
    def test_sjf_mean_ttft_not_worse_than_greedy(self):
        # binding capacity: short jobs free slots sooner under SJF
        for seed in (1, 2, 3):
            trace = generate(_mixed_spec(seed=seed, qps=8.0))
            greedy_out, _ = _sim("greedy", trace, cap=3)
            sjf_out, _ = _sim("sjf", trace, cap=3)
            g = [o.ttft for o in greedy_out if o.ttft is not None]
            s = [o.ttft for o in sjf_out if o.ttft is not None]
            assert sum(s) / len(s) <= sum(g) / len(g) + 1e-9

    def test_early_reject_completions_subset_of_greedy(self):
        trace = generate(_mixed_spec(seed=4, qps=10.0))
        greedy_out, _ = _sim("greedy", trace, cap=10_000)
        early_out, _ = _sim("early_reject", trace, cap=10_000)
        greedy_done = {o.id for o in greedy_out if o.status is Status.COMPLETED}
        early_done = {o.id for o in early_out if o.status is Status.COMPLETED}
        assert early_done <= greedy_done

    def test_greedy_conservation_without_rejections(self):
        trace = generate(_mixed_spec(seed=5))
        outcomes, _ = _sim("greedy", trace)
        assert all(
            o.status in (Status.COMPLETED, Status.INCOMPLETE) for o in outcomes
        )
        assert len(outcomes) == len(trace)
