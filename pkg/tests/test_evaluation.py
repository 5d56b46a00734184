import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import futureqa.evaluation as evaluation
from futureqa.embeddings import init_table
from futureqa.evaluation import (EvalReport, LeakageGuardError, data_efficiency,
                                 hits_at_k, metric_curve, mrr, render_table,
                                 report_to_csv, run_benchmark)
from futureqa.forecaster import TimeAwareReps
from futureqa.qa import Prediction
from futureqa.questions import Question


class TestMRR:
    def test_all_rank_one(self):
        assert mrr([1, 1, 1]) == 1.0

    def test_arithmetic(self):
        assert mrr([1, 2, 4]) == pytest.approx((1 + 0.5 + 0.25) / 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mrr([])

    def test_invalid_rank_rejected(self):
        with pytest.raises(ValueError):
            mrr([0])

    def test_brute_force_agreement(self, rng):
        ranks = rng.integers(1, 500, size=1000).tolist()
        brute = sum(1.0 / r for r in ranks) / len(ranks)
        assert mrr(ranks) == pytest.approx(brute, rel=1e-12)


class TestHits:
    def test_example(self):
        assert hits_at_k([1, 2, 11], 10) == pytest.approx(2 / 3)

    def test_k_equal_vocab_size_is_one(self, rng):
        ranks = rng.integers(1, 100, size=50).tolist()
        assert hits_at_k(ranks, 100) == 1.0

    @given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
    @settings(max_examples=50)
    def test_monotone_in_k(self, ranks):
        values = [hits_at_k(ranks, k) for k in range(1, 12)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_brute_force_agreement(self, rng):
        ranks = rng.integers(1, 40, size=300).tolist()
        for k in (1, 3, 10):
            brute = sum(1 for r in ranks if r <= k) / len(ranks)
            assert hits_at_k(ranks, k) == pytest.approx(brute, rel=1e-12)


def fake_reps(n_timestamps=10, n_entities=5, dim=2):
    base = init_table(n_entities, 2, None, dim, np.random.default_rng(0))
    reps = TimeAwareReps(base, window=4)
    for t in range(n_timestamps):
        reps.store(t, np.array([], dtype=np.int64), np.zeros((0, 2 * dim)),
                   max_fact_t=t - 1)
    return reps


def epq(i, t=5, answer=1):
    return Question(id=f"e{i}", qtype="EPQ1", text="who?", entities=[0],
                    t_q=t, answer=answer)


def yuq(i, answer):
    return Question(id=f"y{i}", qtype="YUQ", text="will?", entities=[0, 1],
                    t_q=5, answer=answer)


class TestBenchmark:
    def test_perfect_oracle_scores_one(self, monkeypatch):
        reps = fake_reps()
        questions = [epq(i) for i in range(4)] + [yuq(i, "yes") for i in range(4)]

        def oracle(q, reps_, model, matrices=None):
            if q.qtype == "EPQ1":
                return Prediction(q.qtype, np.zeros(5), q.answer, rank=1)
            return Prediction(q.qtype, np.zeros(2), q.answer)

        monkeypatch.setattr(evaluation, "predict", oracle)
        report = run_benchmark(None, reps, questions)
        assert report.aggregates["epq_1hop"]["mrr"] == 1.0
        assert report.aggregates["epq_overall"]["hits@1"] == 1.0
        assert report.aggregates["yuq"]["accuracy"] == 1.0

    def test_uniform_random_scorer_matches_analytic_mrr(self, monkeypatch):
        n_entities = 100
        reps = fake_reps()
        questions = [epq(i) for i in range(10_000)]
        g = np.random.default_rng(4)

        def random_ranker(q, reps_, model, matrices=None):
            return Prediction(q.qtype, np.zeros(n_entities), 0,
                              rank=int(g.integers(1, n_entities + 1)))

        monkeypatch.setattr(evaluation, "predict", random_ranker)
        report = run_benchmark(None, reps, questions)
        analytic = sum(1.0 / r for r in range(1, n_entities + 1)) / n_entities
        assert report.aggregates["epq_1hop"]["mrr"] == pytest.approx(
            analytic, abs=0.01)

    def test_majority_class_yuq_baseline(self, monkeypatch):
        reps = fake_reps()
        labels = ["yes"] * 25 + ["unknown"] * 75
        questions = [yuq(i, lab) for i, lab in enumerate(labels)]

        def always_unknown(q, reps_, model, matrices=None):
            return Prediction(q.qtype, np.zeros(2), "unknown")

        monkeypatch.setattr(evaluation, "predict", always_unknown)
        report = run_benchmark(None, reps, questions)
        assert report.aggregates["yuq"]["accuracy"] == pytest.approx(0.75)

    def test_overall_is_question_count_weighted(self, monkeypatch):
        reps = fake_reps()
        one_hop = [epq(i) for i in range(3)]
        two_hop = [Question(id=f"t{i}", qtype="EPQ2", text="w", entities=[0],
                            t_q=5, answer=1) for i in range(1)]

        def ranker(q, reps_, model, matrices=None):
            rank = 1 if q.qtype == "EPQ1" else 5
            return Prediction(q.qtype, np.zeros(5), q.answer, rank=rank)

        monkeypatch.setattr(evaluation, "predict", ranker)
        report = run_benchmark(None, reps, one_hop + two_hop)
        expected = (3 * 1.0 + 1 * (1 / 5)) / 4
        assert report.aggregates["epq_overall"]["mrr"] == pytest.approx(expected)

    def test_leakage_guard_aborts(self):
        reps = fake_reps()
        reps.window_max_t[5] = 5   # claims to have seen facts at t_q
        with pytest.raises(LeakageGuardError):
            run_benchmark(None, reps, [epq(0)])

    def test_missing_timestamp_aborts(self):
        reps = fake_reps(n_timestamps=3)
        with pytest.raises(LeakageGuardError):
            run_benchmark(None, reps, [epq(0, t=7)])


class TestReport:
    def test_round_trip_lossless(self, tmp_path, monkeypatch):
        reps = fake_reps()
        monkeypatch.setattr(
            evaluation, "predict",
            lambda q, r, m, matrices=None: Prediction(q.qtype, np.zeros(5),
                                                      q.answer, rank=2))
        report = run_benchmark(None, reps, [epq(0), epq(1)], config={"x": 1})
        report.save(tmp_path / "report.json")
        loaded = EvalReport.load(tmp_path / "report.json")
        assert loaded.aggregates == report.aggregates
        assert loaded.per_question == report.per_question
        assert loaded.config == report.config

    def test_serialized_report_excludes_timing(self, tmp_path, monkeypatch):
        reps = fake_reps()
        monkeypatch.setattr(
            evaluation, "predict",
            lambda q, r, m, matrices=None: Prediction(q.qtype, np.zeros(5),
                                                      q.answer, rank=1))
        report = run_benchmark(None, reps, [epq(0)])
        assert report.wall_clock_seconds is not None
        assert "wall_clock" not in report.to_json()

    def test_render_and_csv(self, monkeypatch):
        reps = fake_reps()
        monkeypatch.setattr(
            evaluation, "predict",
            lambda q, r, m, matrices=None: Prediction(q.qtype, np.zeros(5),
                                                      q.answer, rank=1))
        report = run_benchmark(None, reps, [epq(0)])
        table = render_table(report)
        assert "epq_1hop" in table
        csv = report_to_csv(report)
        assert csv.startswith("block,metric,value")
        assert "epq_1hop,mrr,1.0" in csv


class TestDataEfficiency:
    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            data_efficiency({}, [], None, None, fractions=[0.0, 1.0])
        with pytest.raises(ValueError):
            data_efficiency({}, [], None, None, fractions=[0.5, 0.1])

    def test_runs_and_full_fraction_matches_standard_run(self):
        from test_qa import tiny_world
        from futureqa.embeddings import TrainConfig
        from futureqa.qa import train_qa
        kg, reps, questions, model = tiny_world()
        small = {"ep": questions["ep"][:24]}
        test_qs = questions["ep"][24:36]
        cfg = TrainConfig(dim=4, epochs=2, batch_size=8, learning_rate=5e-3,
                          seed=3)
        points = data_efficiency(small, test_qs, reps, cfg,
                                 fractions=[0.25, 1.0], seed=1,
                                 token_vocab=model.token_vocab)
        assert [p["fraction"] for p in points] == [0.25, 1.0]
        curve = metric_curve(points, "epq_1hop", "mrr")
        assert len(curve) == 2 and all(np.isfinite(curve))

        standard, _ = train_qa(small, reps, cfg, token_vocab=model.token_vocab)
        rerun, _ = train_qa(small, reps, cfg, token_vocab=model.token_vocab)
        assert np.array_equal(standard.heads.ep_W, rerun.heads.ep_W)
        report = run_benchmark(standard, reps, test_qs)
        assert report.aggregates == points[-1]["aggregates"]
