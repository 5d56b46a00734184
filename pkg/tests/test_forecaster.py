import numpy as np
import pytest

from futureqa.embeddings import TrainConfig
from futureqa.forecaster import (ForecastParams, LeakageError, infer_reps,
                                 init_params, load_params, load_reps,
                                 precompute_all, save_params, save_reps,
                                 train_forecaster)
from futureqa.tkg import TemporalKG

from conftest import make_kg, make_vocab


def fresh_params(n_entities=6, n_relations=2, dim=4, window=4, seed=0):
    return init_params(n_entities, n_relations, dim, window,
                       np.random.default_rng(seed))


def base_matrix(params):
    return np.concatenate([params.base.entities.re, params.base.entities.im], axis=1)


class TestInfer:
    def test_empty_window_is_base_fixed_point(self):
        kg = make_kg(np.empty((0, 4)), n_entities=6, n_relations=2, n_timestamps=10)
        params = fresh_params()
        H, updated = infer_reps(kg, params, 5)
        assert updated.size == 0
        assert np.array_equal(H, base_matrix(params))

    def test_single_fact_touches_only_endpoints(self):
        kg = make_kg([(1, 0, 3, 4)], n_entities=6, n_relations=2, n_timestamps=10)
        params = fresh_params()
        H, updated = infer_reps(kg, params, 5)
        assert updated.tolist() == [1, 3]
        base = base_matrix(params)
        for e in range(6):
            if e in (1, 3):
                assert not np.array_equal(H[e], base[e])
            else:
                assert np.array_equal(H[e], base[e])

    def test_leakage_guard_rejects_future_facts(self):
        kg = make_kg([(0, 0, 1, 6)], n_entities=6, n_relations=2, n_timestamps=10)
        with pytest.raises(LeakageError):
            infer_reps(kg, fresh_params(), 5)
        with pytest.raises(LeakageError):
            infer_reps(kg, fresh_params(), 6)  # at t is also leakage

    def test_no_future_information_bit_exact(self):
        past = [(1, 0, 3, 3), (2, 1, 4, 4)]
        future = [(0, 0, 5, 7), (5, 1, 0, 9)]
        kg_past = make_kg(past, n_entities=6, n_relations=2, n_timestamps=10)
        kg_full = make_kg(past + future, n_entities=6, n_relations=2, n_timestamps=10)
        params = fresh_params()
        H_past, _ = infer_reps(kg_past, params, 5)
        H_cut, _ = infer_reps(kg_full.restrict_before(5), params, 5)
        assert np.array_equal(H_past, H_cut)

    def test_window_locality(self):
        in_window = [(1, 0, 3, 6), (2, 1, 4, 8)]
        stale = [(0, 0, 5, 1), (5, 1, 0, 2)]
        params = fresh_params()
        kg_a = make_kg(in_window, n_entities=6, n_relations=2, n_timestamps=12)
        kg_b = make_kg(in_window + stale, n_entities=6, n_relations=2, n_timestamps=12)
        H_a, _ = infer_reps(kg_a, params, 9)
        H_b, _ = infer_reps(kg_b, params, 9)
        assert np.array_equal(H_a, H_b)  #窗口 is t-4..t-1; older facts ignored

    def test_message_locality(self):
        # Chain 0->1 at t=8; adding a far-away fact 4->5 must not change
        # reps of 0,1.
        params = fresh_params()
        kg_a = make_kg([(0, 0, 1, 8)], n_entities=6, n_relations=2, n_timestamps=10)
        kg_b = make_kg([(0, 0, 1, 8), (4, 1, 5, 8)], n_entities=6, n_relations=2,
                       n_timestamps=10)
        H_a, _ = infer_reps(kg_a, params, 9)
        H_b, _ = infer_reps(kg_b, params, 9)
        assert np.array_equal(H_a[[0, 1]], H_b[[0, 1]])
        assert not np.array_equal(H_a[[4, 5]], H_b[[4, 5]])

    def test_duplicate_facts_collapse_to_one_message(self):
        params = fresh_params()
        kg_one = make_kg([(0, 0, 1, 4)], n_entities=6, n_relations=2, n_timestamps=6)
        kg_dup = make_kg([(0, 0, 1, 4)] * 3, n_entities=6, n_relations=2, n_timestamps=6)
        H_one, _ = infer_reps(kg_one, params, 5)
        H_dup, _ = infer_reps(kg_dup, params, 5)
        assert np.array_equal(H_one, H_dup)


def planted_rule_kg(n_entities=30, n_days=60, per_day=3, seed=0):
    """(a, r0, b) at t implies (a, r1, b) at t+1; triggers random."""
    rng = np.random.default_rng(seed)
    quads = []
    for t in range(n_days - 1):
        subjects = rng.choice(n_entities, size=per_day, replace=False)
        for a in subjects:
            b = int(rng.integers(n_entities - 1))
            if b >= a:
                b += 1
            quads.append((int(a), 0, b, t))
            quads.append((int(a), 1, b, t + 1))
    return make_kg(quads, n_entities=n_entities, n_relations=2, n_timestamps=n_days)


def consequence_mrr(kg, params, t_lo, t_hi):
    """MRR over consequence queries (a, r1, ?, t) using reps from < t."""
    ranks = []
    for t in range(t_lo, t_hi):
        snap = kg.snapshot(t)
        cons = snap[snap[:, 1] == 1]
        if cons.shape[0] == 0:
            continue
        H, _ = infer_reps(kg.restrict_before(t), params, t)
        d = params.dim
        for s, r, o, _ in cons:
            h_s = H[s, :d] + 1j * H[s, d:]
            w = params.base.relations.re[r] + 1j * params.base.relations.im[r]
            cand = H[:, :d] + 1j * H[:, d:]
            scores = np.real((h_s * w) @ np.conj(cand).T)
            target = scores[o]
            ranks.append(1 + int(np.sum(scores > target))
                         + int(np.sum(scores[:o] == target)))
    return float(np.mean([1.0 / r for r in ranks]))


class TestTrain:
    def test_planted_rule_learned(self):
        kg = planted_rule_kg()
        train = kg.restrict(0, 49)
        cfg = TrainConfig(dim=16, epochs=60, batch_size=64, learning_rate=0.02, seed=1)
        params, losses = train_forecaster(train, cfg)
        assert losses[-1] < losses[0]
        untrained = init_params(30, 2, 16, 4, np.random.default_rng(1))
        trained_mrr = consequence_mrr(kg, params, 50, 60)
        untrained_mrr = consequence_mrr(kg, untrained, 50, 60)
        hits = consequence_hits_at_1(kg, params, 50, 60)
        assert hits >= 0.9
        assert trained_mrr - untrained_mrr >= 0.4

    def test_shuffled_label_control_stays_at_chance(self):
        kg = planted_rule_kg()
        rng = np.random.default_rng(9)
        quads = kg.quads.copy()
        quads[:, 2] = rng.integers(0, 30, quads.shape[0])
        garbage = TemporalKG(kg.vocab, quads)
        train = garbage.restrict(0, 49)
        cfg = TrainConfig(dim=16, epochs=20, batch_size=64, learning_rate=0.02, seed=1)
        params, _ = train_forecaster(train, cfg)
        mrr = consequence_mrr(garbage, params, 50, 60)
        chance = np.mean([1.0 / r for r in range(1, 31)])
        assert mrr <= 3 * chance

    def test_determinism_under_seed(self):
        kg = planted_rule_kg(n_entities=8, n_days=12, per_day=2)
        cfg = TrainConfig(dim=4, epochs=3, batch_size=32, learning_rate=0.05, seed=4)
        p1, l1 = train_forecaster(kg, cfg)
        p2, l2 = train_forecaster(kg, cfg)
        assert l1 == l2
        assert np.array_equal(p1.base.entities.re, p2.base.entities.re)
        assert np.array_equal(p1.msg.im, p2.msg.im)
        for key in p1.gate:
            assert np.array_equal(p1.gate[key], p2.gate[key])

    def test_short_span_rejected(self):
        kg = make_kg([(0, 0, 1, t) for t in range(3)], n_entities=3,
                     n_timestamps=3)
        with pytest.raises(ValueError, match="fact timestamps"):
            train_forecaster(kg, TrainConfig(dim=4, epochs=1, batch_size=8,
                                             learning_rate=0.05, seed=0), window=4)


def consequence_hits_at_1(kg, params, t_lo, t_hi):
    hits = []
    for t in range(t_lo, t_hi):
        snap = kg.snapshot(t)
        cons = snap[snap[:, 1] == 1]
        if cons.shape[0] == 0:
            continue
        H, _ = infer_reps(kg.restrict_before(t), params, t)
        d = params.dim
        for s, r, o, _ in cons:
            h_s = H[s, :d] + 1j * H[s, d:]
            w = params.base.relations.re[r] + 1j * params.base.relations.im[r]
            cand = H[:, :d] + 1j * H[:, d:]
            scores = np.real((h_s * w) @ np.conj(cand).T)
            target = scores[o]
            rank = 1 + int(np.sum(scores > target)) + int(np.sum(scores[:o] == target))
            hits.append(rank == 1)
    return float(np.mean(hits))


class TestPrecompute:
    def test_coverage_and_guard_metadata(self):
        kg = planted_rule_kg(n_entities=8, n_days=10, per_day=2)
        params = fresh_params(8, 2)
        reps = precompute_all(kg, params)
        assert set(reps.per_t) == set(range(10))
        for t in range(10):
            assert reps.window_max_t[t] < t

    def test_leakage_invariance_bit_exact(self):
        kg = planted_rule_kg(n_entities=8, n_days=10, per_day=2)
        params = fresh_params(8, 2)
        t_cut = 7
        full = precompute_all(kg, params, timestamps=[t_cut])
        truncated = precompute_all(kg.restrict_before(t_cut), params,
                                   timestamps=[t_cut])
        assert np.array_equal(full.entity_matrix(t_cut),
                              truncated.entity_matrix(t_cut))

    def test_base_fallback_for_untouched_entities(self):
        kg = make_kg([(0, 0, 1, 2)], n_entities=6, n_relations=2, n_timestamps=5)
        params = fresh_params()
        reps = precompute_all(kg, params)
        v = reps.entity(5, 3)
        assert np.array_equal(v.re, params.base.entities.re[5])
        assert reps.has_exact(0, 3)
        assert not reps.has_exact(5, 3)

    def test_round_trip_bit_exact(self, tmp_path):
        kg = planted_rule_kg(n_entities=8, n_days=10, per_day=2)
        params = fresh_params(8, 2)
        reps = precompute_all(kg, params)
        save_reps(reps, tmp_path / "reps.bin")
        loaded = load_reps(tmp_path / "reps.bin")
        for t in range(10):
            assert np.array_equal(loaded.entity_matrix(t), reps.entity_matrix(t))
            assert loaded.window_max_t[t] == reps.window_max_t[t]


def test_params_round_trip(tmp_path):
    params = fresh_params()
    save_params(params, tmp_path / "fc.bin")
    loaded = load_params(tmp_path / "fc.bin")
    assert loaded.window == params.window
    assert np.array_equal(loaded.msg.re, params.msg.re)
    assert np.array_equal(loaded.base.entities.im, params.base.entities.im)
    for key in params.gate:
        assert np.array_equal(loaded.gate[key], params.gate[key])


def test_window_validation():
    with pytest.raises(ValueError):
        ForecastParams(fresh_params().base, fresh_params().msg,
                       fresh_params().gate, window=0)
