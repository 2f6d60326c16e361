"""
Tests for dataset app - MovieLens ingestion, features, splits, negatives.
"""
import os

import numpy as np
import pytest
from django.conf import settings

from .features import load_features, save_features, synth_features
from .movielens import (
    DatasetParseError,
    InteractionLog,
    carve_validation,
    load_movielens,
    sample_negative_block,
    sample_negatives,
    split_per_user,
    synth_interactions,
)
from .streams import keyed_rng


@pytest.fixture
def write_ratings(tmp_path):
    def _write(text, name="u.data"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write


class TestLoadMovielens:

    def test_single_line(self, write_ratings):
        log = load_movielens(write_ratings("1\t1\t5\t0\n"))
        assert log.num_users == 1
        assert log.num_items == 1
        assert len(log) == 1
        assert log.interactions[0].rating == 5

    def test_malformed_line_reports_line_number(self, write_ratings):
        with pytest.raises(DatasetParseError) as excinfo:
            load_movielens(write_ratings("1\t1\tfive\t0\n"))
        assert excinfo.value.line_number == 1

    def test_malformed_later_line(self, write_ratings):
        with pytest.raises(DatasetParseError) as excinfo:
            load_movielens(write_ratings("1\t1\t5\t0\n2\t3\t4\n"))
        assert excinfo.value.line_number == 2

    def test_rating_out_of_range(self, write_ratings):
        with pytest.raises(DatasetParseError):
            load_movielens(write_ratings("1\t1\t6\t0\n"))

    def test_empty_file(self, write_ratings):
        with pytest.raises(DatasetParseError):
            load_movielens(write_ratings(""))

    def test_non_utf8_file(self, tmp_path):
        path = tmp_path / "u.data"
        path.write_bytes(b"1\t1\t5\t0\n\xff\xfe\t2\t3\t0\n")
        with pytest.raises(DatasetParseError) as excinfo:
            load_movielens(path)
        assert "u.data" in str(excinfo.value)

    def test_remapping_is_bijection(self, write_ratings):
        log = load_movielens(write_ratings("10\t500\t3\t5\n7\t20\t4\t6\n10\t20\t1\t7\n"))
        assert log.num_users == 2
        assert log.num_items == 2
        for original in (7, 10):
            assert log.user_labels[log.user_index(original)] == original
        for original in (20, 500):
            assert log.item_labels[log.item_index(original)] == original
        with pytest.raises(KeyError):
            log.user_index(99)

    def test_adjacency_matches_interactions(self, synthetic_log):
        log = synthetic_log(num_users=30, num_items=80, seed=3, min_count=5, max_count=40)
        for interaction in log:
            assert interaction.item_id in log.positives[interaction.user_id]
        assert sum(len(p) for p in log.positives) == len(log)

    @pytest.mark.skipif(
        not os.path.exists(settings.FEDSEL['DATA_PATH']),
        reason="canonical MovieLens-100K u.data not available",
    )
    def test_canonical_statistics(self):
        log = load_movielens(settings.FEDSEL['DATA_PATH'])
        assert (log.num_users, log.num_items, len(log)) == (943, 1682, 100000)


class TestSynthInteractions:

    def test_deterministic(self):
        a = synth_interactions(num_users=20, num_items=50, seed=4, min_count=5, max_count=30)
        b = synth_interactions(num_users=20, num_items=50, seed=4, min_count=5, max_count=30)
        assert np.array_equal(a.users, b.users)
        assert np.array_equal(a.items, b.items)

    def test_counts_respect_bounds(self):
        log = synth_interactions(num_users=25, num_items=60, seed=1, min_count=5, max_count=30)
        counts = log.user_counts()
        assert log.num_users == 25
        assert counts.min() >= 5
        assert counts.max() <= 30

    def test_no_duplicate_pairs(self):
        log = synth_interactions(num_users=15, num_items=40, seed=2, min_count=10, max_count=40)
        pairs = set(zip(log.users.tolist(), log.items.tolist()))
        assert len(pairs) == len(log)

    def test_rejects_empty_catalogue(self):
        with pytest.raises(ValueError):
            synth_interactions(num_users=5, num_items=0)


class TestSynthFeatures:

    def test_deterministic(self):
        a = synth_features(7, 4, 4, 2)
        b = synth_features(7, 4, 4, 2)
        assert a.text.tobytes() == b.text.tobytes()
        assert a.visual.tobytes() == b.visual.tobytes()
        assert a.source == 'synthetic'

    def test_seed_changes_features(self):
        a = synth_features(7, 4, 4, 2)
        b = synth_features(8, 4, 4, 2)
        assert not np.array_equal(a.text, b.text) or not np.array_equal(a.visual, b.visual)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            synth_features(7, 0, 4, 2)

    def test_item_vectors_independent_of_catalogue_size(self):
        small = synth_features(3, 5, 6, 4)
        large = synth_features(3, 5, 6, 10)
        assert np.array_equal(small.text, large.text[:4])

    def test_feature_file_round_trip(self, tmp_path):
        bundle = synth_features(1, 3, 2, 5)
        save_features(tmp_path / "features.bin", bundle)
        loaded = load_features(tmp_path / "features.bin", num_items=5)
        assert loaded.source == 'file'
        assert np.allclose(loaded.text, bundle.text, atol=1e-6)
        assert np.allclose(loaded.visual, bundle.visual, atol=1e-6)

    def test_feature_file_item_count_mismatch(self, tmp_path):
        save_features(tmp_path / "features.bin", synth_features(1, 3, 2, 5))
        with pytest.raises(ValueError):
            load_features(tmp_path / "features.bin", num_items=6)


class TestSplitPerUser:

    def test_ten_interactions(self):
        log = InteractionLog.from_records([(1, i, 4, i) for i in range(10)])
        split = split_per_user(log, 0.8, seed=0)
        assert len(split.train[0]) == 8
        assert len(split.test[0]) == 2
        # earliest timestamps go to train
        assert set(split.train[0]) == set(range(8))

    def test_single_interaction_stays_in_train(self):
        log = InteractionLog.from_records([(1, 1, 4, 0)])
        split = split_per_user(log, 0.8, seed=0)
        assert len(split.train[0]) == 1
        assert len(split.test[0]) == 0

    def test_ratio_rounding_is_exact(self):
        log = InteractionLog.from_records([(1, i, 4, i) for i in range(10)])
        split = split_per_user(log, 0.7, seed=0)
        assert len(split.train[0]) == 7

    def test_conservation_and_disjointness(self, synthetic_log):
        log = synthetic_log(num_users=60, num_items=200, seed=1)
        split = split_per_user(log, 0.8, seed=5)
        assert split.train_count() + split.test_count() == len(log)
        counts = log.user_counts()
        for u in range(log.num_users):
            assert len(split.train[u]) + len(split.test[u]) == counts[u]
            assert not set(split.train[u]) & set(split.test[u])
            if len(split.test[u]):
                assert len(split.train[u]) >= 1

    def test_seed_only_breaks_timestamp_ties(self):
        records = [(1, i, 3, 100) for i in range(10)]
        log = InteractionLog.from_records(records)
        a = split_per_user(log, 0.5, seed=1)
        b = split_per_user(log, 0.5, seed=1)
        assert np.array_equal(a.train[0], b.train[0])

    def test_invalid_ratio(self):
        log = InteractionLog.from_records([(1, 1, 4, 0)])
        with pytest.raises(ValueError):
            split_per_user(log, 1.0, seed=0)

    def test_carve_validation_keeps_train_positive(self, synthetic_log):
        log = synthetic_log(num_users=40, num_items=150, seed=2)
        split = split_per_user(log, 0.8, seed=0)
        carved = carve_validation(split, 0.1, seed=0)
        assert carved.train_count() + sum(len(v) for v in carved.validation.values()) == split.train_count()
        for u, items in carved.validation.items():
            assert len(carved.train[u]) >= 1
            assert not set(items) & set(carved.train[u])


class TestNegativeSampling:

    def test_forced_choice(self):
        negatives = sample_negatives({0, 1}, 3, 1, keyed_rng(0))
        assert list(negatives) == [2]

    def test_disjoint_from_positives(self):
        positives = set(range(0, 1682, 3))
        negatives = sample_negatives(positives, 1682, 4, keyed_rng(1))
        assert len(negatives) == 4
        assert len(set(negatives)) == 4
        assert not set(negatives) & positives

    def test_zero_negatives(self):
        assert len(sample_negatives({0}, 5, 0, keyed_rng(2))) == 0

    def test_all_items_rated(self):
        with pytest.raises(ValueError):
            sample_negatives({0, 1, 2}, 3, 1, keyed_rng(3))

    @pytest.mark.parametrize("seed", range(10))
    def test_block_never_returns_train_positive(self, synthetic_log, seed):
        log = synthetic_log(num_users=50, num_items=120, seed=seed, min_count=10, max_count=100)
        split = split_per_user(log, 0.8, seed=seed)
        mask = split.positive_mask()
        rng = keyed_rng(seed, 99)
        users = rng.integers(0, log.num_users, size=200)
        block = sample_negative_block(users, 4, mask, rng)
        assert block.shape == (200, 4)
        assert not mask[users[:, None], block].any()
        for row in block:
            assert len(set(row)) == 4

    def test_block_falls_back_to_repeats(self):
        mask = np.array([[True, True, False]])
        block = sample_negative_block(np.array([0]), 3, mask, keyed_rng(4))
        assert list(block[0]) == [2, 2, 2]
