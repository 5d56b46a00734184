import numpy as np
import pytest

from futureqa.algebra import ComplexVec, conjugate, re_dot3, re_dot4
from futureqa.embeddings import (EmbeddingTable, NumericError, TrainConfig,
                                 complex_score, init_table, load_table,
                                 rank_of, rank_query, save_table,
                                 score_objects, tcomplex_score, train_static,
                                 train_temporal)

from conftest import make_kg


def small_table(rng, n_e=5, n_r=2, n_t=3, d=4, temporal=True):
    return init_table(n_e, n_r, n_t if temporal else None, d, rng)


class TestScores:
    def test_zero_relation_scores_zero(self, rng):
        tbl = small_table(rng, temporal=False)
        tbl.relations.re[0] = 0
        tbl.relations.im[0] = 0
        for s in range(5):
            for o in range(5):
                assert complex_score(tbl, s, 0, o) == 0.0

    def test_d1_hand_values_match_re_dot3(self, rng):
        tbl = init_table(2, 1, None, 1, rng)
        expected = re_dot3(ComplexVec(tbl.entities.re[0], tbl.entities.im[0]),
                           ComplexVec(tbl.relations.re[0], tbl.relations.im[0]),
                           conjugate(ComplexVec(tbl.entities.re[1], tbl.entities.im[1])))
        assert complex_score(tbl, 0, 0, 1) == pytest.approx(float(expected), rel=1e-14)

    def test_global_phase_leaves_argmax_invariant(self, rng):
        tbl = small_table(rng, temporal=False)
        tbl.relations.im[0] = 0.0  # real relation
        before = [complex_score(tbl, 0, 0, o) for o in range(5)]
        theta = 0.7
        z = (tbl.entities.re + 1j * tbl.entities.im) * np.exp(1j * theta)
        rotated = EmbeddingTable(ComplexVec(z.real, z.imag), tbl.relations, None, tbl.dim)
        after = [complex_score(rotated, 0, 0, o) for o in range(5)]
        assert int(np.argmax(before)) == int(np.argmax(after))

    def test_ones_timestamp_reduces_to_static(self, rng):
        tbl = small_table(rng)
        tbl.timestamps.re[1] = 1.0
        tbl.timestamps.im[1] = 0.0
        assert tcomplex_score(tbl, 0, 1, 2, 1) == pytest.approx(
            complex_score(tbl, 0, 1, 2), rel=1e-12)

    def test_d1_hand_values_match_re_dot4(self, rng):
        tbl = init_table(2, 1, 1, 1, rng)
        expected = re_dot4(
            ComplexVec(tbl.entities.re[0], tbl.entities.im[0]),
            ComplexVec(tbl.relations.re[0], tbl.relations.im[0]),
            conjugate(ComplexVec(tbl.entities.re[1], tbl.entities.im[1])),
            ComplexVec(tbl.timestamps.re[0], tbl.timestamps.im[0]))
        assert tcomplex_score(tbl, 0, 0, 1, 0) == pytest.approx(float(expected), rel=1e-14)

    def test_batch_scores_equal_per_object_loop(self, rng):
        tbl = small_table(rng)
        batch = score_objects(tbl, np.array([1, 2]), np.array([0, 1]),
                              np.array([0, 2]))
        for row, (s, r, t) in zip(batch, [(1, 0, 0), (2, 1, 2)]):
            for o in range(5):
                assert row[o] == pytest.approx(tcomplex_score(tbl, s, r, o, t),
                                               rel=1e-12)

    def test_missing_timestamp_table_rejected(self, rng):
        tbl = small_table(rng, temporal=False)
        with pytest.raises(ValueError):
            tcomplex_score(tbl, 0, 0, 1, 0)

    def test_id_out_of_range(self, rng):
        with pytest.raises(IndexError):
            complex_score(small_table(rng), 9, 0, 0)


class TestRank:
    def test_strictly_highest_is_rank_one(self):
        assert rank_of(np.array([0.1, 5.0, 0.2]), 1) == 1

    def test_tie_rule(self):
        scores = np.zeros(6)
        assert rank_of(scores, 0) == 1
        assert rank_of(scores, 3) == 4

    def test_matches_sort_oracle(self, rng):
        for _ in range(50):
            scores = rng.normal(size=5)
            answer = int(rng.integers(5))
            order = sorted(range(5), key=lambda e: (-scores[e], e))
            assert rank_of(scores, answer) == order.index(answer) + 1

    def test_rank_query_filtered_removes_other_answers(self, rng):
        tbl = small_table(rng)
        raw = rank_query(tbl, 0, 0, 1, answer=2, mode="raw")
        filt = rank_query(tbl, 0, 0, 1, answer=2, mode="time-filtered",
                          known_objects={2, 3, 4})
        assert filt <= raw


def ring_kg(n=20, n_t=4):
    quads = [(s, 0, (s + 1) % n, t) for s in range(n) for t in range(n_t)]
    return make_kg(quads, n_entities=n, n_relations=1, n_timestamps=n_t)


class TestTrainStatic:
    def test_memorizes_deterministic_pattern(self):
        kg = ring_kg()
        cfg = TrainConfig(dim=16, epochs=200, batch_size=32, learning_rate=0.05, seed=7)
        tbl, losses = train_static(kg, cfg)
        assert losses[-1] < losses[0]
        hits = np.mean([rank_query(tbl, s, 0, None, (s + 1) % 20) == 1
                        for s in range(20)])
        assert hits >= 0.9

    def test_single_fact_one_epoch_loss_decreases(self):
        kg = make_kg([(0, 0, 1, 0)], n_entities=3)
        cfg = TrainConfig(dim=4, epochs=2, batch_size=8, learning_rate=0.1, seed=0)
        _, losses = train_static(kg, cfg)
        assert np.isfinite(losses).all()
        assert losses[-1] < losses[0]

    def test_determinism_under_seed(self):
        kg = ring_kg(n=6, n_t=2)
        cfg = TrainConfig(dim=8, epochs=5, batch_size=16, learning_rate=0.05, seed=3)
        t1, _ = train_static(kg, cfg)
        t2, _ = train_static(kg, cfg)
        assert np.array_equal(t1.entities.re, t2.entities.re)
        assert np.array_equal(t1.entities.im, t2.entities.im)
        assert np.array_equal(t1.relations.re, t2.relations.re)

    def test_multiplicity_enters_training(self):
        base = [(0, 0, 1, 0), (1, 0, 2, 0), (2, 0, 0, 0)]
        cfg = TrainConfig(dim=4, epochs=3, batch_size=2, learning_rate=0.05, seed=0)
        t_plain, _ = train_static(make_kg(base, n_entities=3), cfg)
        t_dup, _ = train_static(make_kg(base + [base[0]], n_entities=3), cfg)
        assert not np.array_equal(t_plain.entities.re, t_dup.entities.re)

    def test_empty_kg_rejected(self):
        kg = make_kg(np.empty((0, 4)), n_entities=2, n_relations=1, n_timestamps=1)
        with pytest.raises(ValueError):
            train_static(kg, TrainConfig(dim=4, epochs=1, batch_size=4,
                                         learning_rate=0.1, seed=0))

    def test_divergence_aborts(self):
        kg = ring_kg(n=6, n_t=1)
        cfg = TrainConfig(dim=8, epochs=5, batch_size=8, learning_rate=1e200, seed=0)
        with np.errstate(all="ignore"), pytest.raises(NumericError):
            train_static(kg, cfg)


def regime_flip_kg(n=10, flip=5, n_t=10):
    quads = []
    for t in range(n_t):
        for s in range(n):
            o = (s + 1) % n if t < flip else (s + 2) % n
            quads.append((s, 0, o, t))
    return make_kg(quads, n_entities=n, n_relations=1, n_timestamps=n_t)


class TestTrainTemporal:
    def test_temporal_separates_regimes_static_cannot(self):
        kg = regime_flip_kg()
        cfg = TrainConfig(dim=16, epochs=150, batch_size=64, learning_rate=0.05, seed=5)
        temporal, _ = train_temporal(kg, cfg)
        static, _ = train_static(kg, cfg)

        def accuracy(tbl, use_t):
            hits = []
            for s, r, o, t in kg.quads:
                t_arg = int(t) if use_t else None
                hits.append(rank_query(tbl, int(s), int(r), t_arg, int(o)) == 1)
            return float(np.mean(hits))

        assert accuracy(temporal, True) >= 0.9
        assert accuracy(static, False) <= 0.7

    def test_zero_epochs_returns_initialization(self, rng):
        kg = regime_flip_kg(n=4, flip=2, n_t=4)
        cfg = TrainConfig(dim=4, epochs=0, batch_size=8, learning_rate=0.1, seed=11)
        tbl, losses = train_temporal(kg, cfg)
        expected = init_table(4, 1, 4, 4, np.random.default_rng(11))
        assert losses == []
        assert np.array_equal(tbl.entities.re, expected.entities.re)
        assert np.array_equal(tbl.timestamps.im, expected.timestamps.im)

    def test_determinism(self):
        kg = regime_flip_kg(n=4, flip=2, n_t=4)
        cfg = TrainConfig(dim=4, epochs=4, batch_size=8, learning_rate=0.05, seed=2)
        a, _ = train_temporal(kg, cfg)
        b, _ = train_temporal(kg, cfg)
        assert np.array_equal(a.timestamps.re, b.timestamps.re)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        tbl = small_table(rng)
        save_table(tbl, tmp_path / "emb.bin")
        loaded = load_table(tmp_path / "emb.bin")
        assert np.array_equal(loaded.entities.re, tbl.entities.re)
        assert np.array_equal(loaded.entities.im, tbl.entities.im)
        assert np.array_equal(loaded.timestamps.re, tbl.timestamps.re)
        assert loaded.dim == tbl.dim

    def test_static_table_round_trip(self, tmp_path, rng):
        tbl = small_table(rng, temporal=False)
        save_table(tbl, tmp_path / "emb.bin")
        assert load_table(tmp_path / "emb.bin").timestamps is None


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dim=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    TrainConfig(epochs=0)  # allowed: returns initialization
