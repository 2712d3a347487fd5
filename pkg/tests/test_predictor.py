from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import kendall_tau_b, predictor_metrics
from slosim.core import Request
from slosim.predictor import (
    EQUAL_WIDTH,
    NOISY_BUCKET,
    ORACLE,
    Bucketing,
    LengthPredictor,
    evaluate,
    eval_to_dict,
    load_corpus,
)


def req(i: int, output_len: int, prompt_len: int = 10) -> Request:
    return Request(
        id=i, arrival_time=0.0, prompt_len=prompt_len, true_output_len=output_len,
        ttft_slo=1.0, tpot_slo=1.0,
    )


class TestBucketing:
    def test_equal_width_first_interval(self):
        b = Bucketing.equal_width(10, 1000)
        assert b.bucket_of(50) == 0

    def test_equal_width_upper_boundary_inclusive(self):
        b = Bucketing.equal_width(10, 1000)
        assert b.bucket_of(1000) == 9
        assert b.bucket_of(100) == 0
        assert b.bucket_of(101) == 1

    def test_equal_frequency_median_split(self):
        b = Bucketing.equal_frequency(2, list(range(1, 101)))
        assert b.bucket_of(50) == 0
        assert b.bucket_of(51) == 1

    def test_overflow_clamps_to_last(self):
        b = Bucketing.equal_width(10, 1000)
        assert b.bucket_of(5000) == 9

    def test_length_below_one_errors(self):
        b = Bucketing.equal_width(10, 1000)
        with pytest.raises(ValueError):
            b.bucket_of(0)

    def test_representative_midpoints(self):
        b = Bucketing.equal_width(10, 1000)
        assert b.representative(0) == 50
        assert b.representative(9) == 950

    def test_representative_degenerate_single_bucket(self):
        b = Bucketing.equal_width(1, 1000)
        assert b.representative(0) == 500

    def test_representative_never_below_one(self):
        b = Bucketing.equal_width(1, 1)
        assert b.representative(0) == 1

    def test_representative_bad_index(self):
        b = Bucketing.equal_width(10, 1000)
        with pytest.raises(ValueError):
            b.representative(10)

    @given(
        l1=st.integers(1, 1000),
        l2=st.integers(1, 1000),
        buckets=st.integers(1, 50),
    )
    @settings(max_examples=80)
    def test_equal_width_monotone(self, l1, l2, buckets):
        b = Bucketing.equal_width(buckets, 1000)
        lo, hi = sorted((l1, l2))
        assert b.bucket_of(lo) <= b.bucket_of(hi)

    @given(data=st.data())
    @settings(max_examples=60)
    def test_equal_frequency_monotone(self, data):
        sample = data.draw(
            st.lists(st.integers(1, 500), min_size=10, max_size=80, unique=True)
        )
        buckets = data.draw(st.integers(1, 5))
        try:
            b = Bucketing.equal_frequency(buckets, sample)
        except ValueError:
            return
        l1 = data.draw(st.integers(1, 500))
        l2 = data.draw(st.integers(1, 500))
        lo, hi = sorted((l1, l2))
        assert b.bucket_of(lo) <= b.bucket_of(hi)

    def test_equal_frequency_one_sample_per_bucket(self):
        sample = [3, 7, 11, 19, 30]
        b = Bucketing.equal_frequency(len(sample), sample)
        buckets = [b.bucket_of(v) for v in sorted(sample)]
        assert buckets == [0, 1, 2, 3, 4]

    def test_equal_frequency_tied_sample_errors(self):
        with pytest.raises(ValueError, match="duplicate quantiles"):
            Bucketing.equal_frequency(4, [5] * 40)

    def test_boundaries_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            Bucketing(EQUAL_WIDTH, 2, 10, (5.0, 5.0))


class TestPredict:
    def test_oracle_identity(self):
        pred = LengthPredictor(mode=ORACLE, bucketing=Bucketing.equal_width(10, 1000))
        assert pred.predict(req(0, 137)) == 137

    def test_noise_off_returns_true_bucket_representative(self):
        b = Bucketing.equal_width(10, 1000)
        pred = LengthPredictor(mode=NOISY_BUCKET, bucketing=b, error_prob=0.0)
        assert pred.predict(req(0, 137)) == b.representative(b.bucket_of(137))

    def test_seeded_determinism(self):
        b = Bucketing.equal_width(10, 1000)
        p1 = LengthPredictor(NOISY_BUCKET, b, error_prob=1.0, error_spread=3, rng_seed=5)
        p2 = LengthPredictor(NOISY_BUCKET, b, error_prob=1.0, error_spread=3, rng_seed=5)
        requests = [req(i, 1 + (i * 97) % 900) for i in range(50)]
        assert [p1.predict(r) for r in requests] == [p2.predict(r) for r in requests]

    def test_full_noise_spread_one_moves_at_most_one_bucket(self):
        b = Bucketing.equal_width(10, 1000)
        pred = LengthPredictor(NOISY_BUCKET, b, error_prob=1.0, error_spread=1, rng_seed=3)
        for i in range(50):
            r = req(i, 450)
            shift = abs(b.bucket_of(pred.predict(r)) - b.bucket_of(450))
            assert shift == 1

    def test_noise_clamped_to_valid_buckets(self):
        b = Bucketing.equal_width(4, 100)
        pred = LengthPredictor(NOISY_BUCKET, b, error_prob=1.0, error_spread=10, rng_seed=1)
        for i in range(80):
            p = pred.predict(req(i, 1 + i % 100))
            assert 0 <= b.bucket_of(p) <= 3

    def test_validation(self):
        b = Bucketing.equal_width(4, 100)
        with pytest.raises(ValueError):
            LengthPredictor("magic", b)
        with pytest.raises(ValueError):
            LengthPredictor(NOISY_BUCKET, b, error_prob=1.5)
        with pytest.raises(ValueError):
            LengthPredictor(NOISY_BUCKET, b, error_spread=0)


class TestEvaluate:
    def test_oracle_upper_bound(self):
        b = Bucketing.equal_width(10, 1000)
        pred = LengthPredictor(mode=ORACLE, bucketing=b)
        requests = [req(i, 37 + 90 * i) for i in range(10)]
        result = evaluate(pred, requests)
        assert result.exact_acc == 1.0
        assert result.kendall_tau == pytest.approx(1.0, abs=1e-12)
        expected_rmse = math.sqrt(
            sum(
                (b.representative(b.bucket_of(r.true_output_len)) - r.true_output_len) ** 2
                for r in requests
            )
            / len(requests)
        )
        assert result.rmse_tokens == pytest.approx(expected_rmse, rel=1e-12)

    def test_constant_predictions_tau_zero(self):
        # single-bucket noise model: every prediction is the same representative
        # while the truth varies, so tau-b's tie handling yields 0
        b = Bucketing.equal_width(1, 1000)
        pred = LengthPredictor(mode=NOISY_BUCKET, bucketing=b, error_prob=0.0)
        requests = [req(i, 100 + 50 * i) for i in range(6)]
        result = evaluate(pred, requests)
        assert result.kendall_tau == 0.0
        assert kendall_tau_b([500] * 6, [r.true_output_len for r in requests]) == 0.0

    def test_off_by_ordering(self):
        b = Bucketing.equal_width(20, 1000)
        pred = LengthPredictor(NOISY_BUCKET, b, error_prob=0.8, error_spread=3, rng_seed=11)
        requests = [req(i, 1 + (i * 53) % 999) for i in range(60)]
        result = evaluate(pred, requests)
        assert result.exact_acc <= result.off_by[1] <= result.off_by[2] <= 1.0

    def test_too_few_requests(self):
        b = Bucketing.equal_width(10, 1000)
        pred = LengthPredictor(mode=ORACLE, bucketing=b)
        with pytest.raises(ValueError):
            evaluate(pred, [req(0, 5)])

    def test_matches_brute_force(self):
        b = Bucketing.equal_width(15, 800)
        pred = LengthPredictor(NOISY_BUCKET, b, error_prob=0.5, error_spread=2, rng_seed=23)
        rng = np.random.default_rng(4)
        requests = [req(i, int(rng.integers(1, 801))) for i in range(120)]
        result = evaluate(pred, requests)
        preds = [pred.predict(r) for r in requests]
        trues = [r.true_output_len for r in requests]
        pb = [b.bucket_of(p) for p in preds]
        tb = [b.bucket_of(t) for t in trues]
        reps = [b.representative(x) for x in pb]
        want = predictor_metrics(preds, trues, pb, tb, reps)
        assert result.exact_acc == want["exact_acc"]
        assert result.off_by[1] == want["off_by_1"]
        assert result.off_by[2] == want["off_by_2"]
        assert result.kendall_tau == pytest.approx(want["tau"], abs=1e-12)
        assert result.rmse_tokens == pytest.approx(want["rmse"], rel=1e-12)

    def test_tau_oracle_agrees_with_scipy_on_ties(self):
        x = [1, 2, 2, 3, 3, 3, 9]
        y = [2, 1, 4, 4, 5, 5, 5]
        from scipy.stats import kendalltau

        assert kendall_tau_b(x, y) == pytest.approx(
            float(kendalltau(x, y).statistic), abs=1e-12
        )

    def test_right_skew_equal_frequency_rmse_worse(self):
        # geometric-like tail: equal-frequency bins get very wide on the right,
        # so representative error dominates under the same noise model
        rng = np.random.default_rng(77)
        lengths = [int(v) for v in np.clip(rng.geometric(0.02, size=400), 1, 2000)]
        requests = [req(i, v) for i, v in enumerate(lengths)]
        width = Bucketing.equal_width(10, max(lengths))
        freq = Bucketing.equal_frequency(10, lengths)
        kwargs = dict(error_prob=0.5, error_spread=2, rng_seed=5)
        rmse_width = evaluate(
            LengthPredictor(NOISY_BUCKET, width, **kwargs), requests
        ).rmse_tokens
        rmse_freq = evaluate(
            LengthPredictor(NOISY_BUCKET, freq, **kwargs), requests
        ).rmse_tokens
        assert rmse_freq >= rmse_width


class TestCorpusIo:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [{"prompt_len": 10 * (i + 1), "output_len": 5 * (i + 1)} for i in range(4)]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        corpus = load_corpus(path)
        assert [r.true_output_len for r in corpus] == [5, 10, 15, 20]
        assert [r.prompt_len for r in corpus] == [10, 20, 30, 40]

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"prompt_len": 1, "output_len": 2}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            load_corpus(path)

    def test_eval_dict_fields(self):
        b = Bucketing.equal_width(10, 1000)
        pred = LengthPredictor(mode=ORACLE, bucketing=b)
        result = evaluate(pred, [req(0, 10), req(1, 500)])
        payload = eval_to_dict(result)
        assert set(payload) == {
            "exact_acc", "off_by_1_acc", "off_by_2_acc", "kendall_tau", "rmse_tokens",
        }
