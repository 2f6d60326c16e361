"""
Tests for recmodel app - scoring network, losses, gradients, AdamW, local training.
"""
import math

import numpy as np
import pytest

from dataset.features import ModalityBundle, synth_features

from .gradcheck import check_gradients, relative_error
from .losses import distance_correlation, distance_correlation_grad, hinge_block, ranking_loss
from .network import (
    Batch,
    NonFiniteLossError,
    attention_weights,
    factor_score,
    factorize,
    gelu,
    predict,
    predict_pairs,
    project_modality,
    score_matrix,
    total_loss,
)
from .optim import AdamWState, adamw_step
from .params import HyperParams, ModelParams, init_params, load_checkpoint, param_shapes, save_checkpoint
from .training import LocalData, train_local


SMALL = dict(dim=8, factors=2, text_dim=5, visual_dim=5, text_hidden=6, visual_hidden=6,
             attention_hidden=5, negatives=2, dropout=0.0)


@pytest.fixture
def small_hyper():
    return HyperParams(**SMALL)


def random_params(hyper, num_users, num_items, rng, scale=0.5):
    return ModelParams({
        name: rng.normal(0.0, scale, size=shape)
        for name, shape in param_shapes(hyper, num_users, num_items).items()
    })


def zero_params(hyper, num_users, num_items):
    return ModelParams({
        name: np.zeros(shape) for name, shape in param_shapes(hyper, num_users, num_items).items()
    })


def random_batch(rng, num_users, num_items, size, negatives):
    return Batch(
        users=rng.integers(0, num_users, size=size),
        positives=rng.integers(0, num_items, size=size),
        negatives=rng.integers(0, num_items, size=(size, negatives)),
    )


def scalar_mlp(w1, w2):
    return (np.array([[w1]]), np.zeros(1), np.array([[w2]]), np.zeros(1))


class TestProjectModality:

    def test_zero_weights(self):
        mlp = (np.zeros((3, 4)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        assert np.array_equal(project_modality(np.ones(4), mlp), np.zeros(2))

    def test_positive_path(self):
        assert project_modality(np.array([1.0]), scalar_mlp(2.0, 1.0))[0] == pytest.approx(2.0, abs=1e-12)

    def test_negative_slope_applied_twice(self):
        assert project_modality(np.array([-1.0]), scalar_mlp(1.0, 1.0))[0] == pytest.approx(-0.04, abs=1e-12)

    def test_shape_mismatch(self):
        mlp = (np.zeros((3, 4)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            project_modality(np.ones(5), mlp)

    def test_dropout_only_in_training_mode(self):
        rng = np.random.default_rng(0)
        mlp = (rng.normal(size=(16, 4)), np.zeros(16), rng.normal(size=(3, 16)), np.zeros(3))
        x = rng.normal(size=(10, 4))
        evaluation = project_modality(x, mlp, dropout=0.5)
        assert np.array_equal(evaluation, project_modality(x, mlp, dropout=0.5))
        training = project_modality(x, mlp, dropout=0.5, rng=np.random.default_rng(1))
        assert not np.allclose(training, evaluation)


class TestFactorize:

    def test_two_blocks(self):
        blocks = factorize(np.array([1, 2, 3, 4]), 2)
        assert blocks.tolist() == [[1, 2], [3, 4]]

    def test_single_factor_is_identity(self):
        v = np.arange(6.0)
        assert np.array_equal(factorize(v, 1)[0], v)

    def test_concatenation_restores_input(self):
        v = np.arange(6.0)
        blocks = factorize(v, 3)
        assert blocks.shape == (3, 2)
        assert np.array_equal(np.concatenate(list(blocks)), v)

    def test_indivisible(self):
        with pytest.raises(ValueError):
            factorize(np.arange(5.0), 2)


class TestAttentionWeights:

    @staticmethod
    def zero_attention(hidden=4, width=8):
        return [np.zeros((hidden, width)), np.zeros(hidden), np.zeros((3, hidden)), np.zeros(3)]

    def test_zero_params_uniform(self):
        alpha = attention_weights(np.ones(8), *self.zero_attention())
        assert np.allclose(alpha, 1 / 3, atol=1e-12)

    def test_bias_shifts_weight(self):
        w1, b1, w2, b2 = self.zero_attention()
        b2 = np.array([math.log(2.0), 0.0, 0.0])
        alpha = attention_weights(np.ones(8), w1, b1, w2, b2)
        assert np.allclose(alpha, (0.5, 0.25, 0.25), atol=1e-12)

    def test_random_inputs_normalized(self):
        rng = np.random.default_rng(3)
        params = [rng.normal(size=(4, 8)), rng.normal(size=4), rng.normal(size=(3, 4)), rng.normal(size=3)]
        alpha = attention_weights(rng.normal(size=(50, 8)) * 10, *params)
        assert np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)
        assert (alpha > 0).all()

    def test_non_finite_input(self):
        h = np.ones(8)
        h[2] = np.nan
        with pytest.raises(ValueError):
            attention_weights(h, *self.zero_attention())


class TestFactorScore:

    def test_zero_blocks(self):
        z = np.zeros(2)
        assert factor_score(z, z, z, z, np.full(3, 1 / 3)) == 0.0

    def test_id_channel(self):
        p, v, z = np.array([1.0, 0.0]), np.array([1.0, 5.0]), np.zeros(2)
        assert factor_score(p, v, z, z, np.array([1.0, 0.0, 0.0])) == pytest.approx(0.841345, abs=1e-6)

    def test_gelu_tail(self):
        p, t, z = np.array([1.0, 0.0]), np.array([-10.0, 0.0]), np.zeros(2)
        score = factor_score(p, z, t, z, np.array([0.0, 1.0, 0.0]))
        assert abs(score) < 1e-20

    def test_gelu_matches_erf_definition(self):
        for z in (-3.0, -0.5, 0.0, 0.7, 2.5):
            assert gelu(z) == pytest.approx(z * 0.5 * (1 + math.erf(z / math.sqrt(2))), abs=1e-15)


class TestPredict:

    def test_zero_params(self, small_hyper):
        params = zero_params(small_hyper, 3, 4)
        features = synth_features(0, 5, 5, 4)
        assert predict(1, 2, params, features, small_hyper) == 0.0

    def test_single_factor_is_one_factor_score(self):
        hyper = HyperParams(**dict(SMALL, dim=4, factors=1))
        rng = np.random.default_rng(5)
        params = random_params(hyper, 3, 4, rng)
        features = synth_features(1, 5, 5, 4)
        p = params['user_embedding'][1]
        v = params['item_embedding'][2]
        t = project_modality(features.text[2], [params[f'text_{k}'] for k in ('w1', 'b1', 'w2', 'b2')])
        x = project_modality(features.visual[2], [params[f'visual_{k}'] for k in ('w1', 'b1', 'w2', 'b2')])
        alpha = attention_weights(np.concatenate([p, v, t, x]),
                                  *[params[f'attn_{k}'] for k in ('w1', 'b1', 'w2', 'b2')])
        expected = factor_score(p, v, t, x, alpha)
        assert predict(1, 2, params, features, hyper) == pytest.approx(expected, abs=1e-12)

    def test_identical_factors_add_up(self):
        single = HyperParams(**dict(SMALL, dim=4, factors=1))
        double = HyperParams(**dict(SMALL, dim=8, factors=2))
        rng = np.random.default_rng(6)
        base = random_params(single, 3, 4, rng)
        tiled = {name: tensor for name, tensor in base.items()}
        for name in ('user_embedding', 'item_embedding'):
            tiled[name] = np.tile(base[name], (1, 2))
        for modality in ('text', 'visual'):
            tiled[f'{modality}_w2'] = np.vstack([base[f'{modality}_w2']] * 2)
            tiled[f'{modality}_b2'] = np.tile(base[f'{modality}_b2'], 2)
        features = synth_features(2, 5, 5, 4)
        one = predict(0, 3, base, features, single)
        two = predict(0, 3, ModelParams(tiled), features, double)
        assert two == pytest.approx(2 * one, abs=1e-12)

    def test_id_only_reduction(self, small_hyper):
        rng = np.random.default_rng(7)
        params = random_params(small_hyper, 4, 6, rng)
        params['attn_b2'][:] = (60.0, -60.0, -60.0)
        features = synth_features(3, 5, 5, 6)

        def standalone(user, item):
            p = params['user_embedding'][user]
            v = params['item_embedding'][item]
            total = 0.0
            for f in range(2):
                dot = float(np.dot(p[4 * f:4 * f + 4], v[4 * f:4 * f + 4]))
                total += dot * 0.5 * (1.0 + math.erf(dot / math.sqrt(2.0)))
            return total

        for user in range(4):
            for item in range(6):
                assert predict(user, item, params, features, small_hyper) == pytest.approx(
                    standalone(user, item), abs=1e-12)

    def test_score_matrix_matches_pairs(self, small_hyper):
        rng = np.random.default_rng(8)
        params = random_params(small_hyper, 5, 7, rng)
        features = synth_features(4, 5, 5, 7)
        users = np.array([4, 0, 2])
        matrix = score_matrix(params, features, small_hyper, users, chunk=2)
        pairs = predict_pairs(params, features, small_hyper, np.repeat(users, 7), np.tile(np.arange(7), 3))
        assert np.allclose(matrix.ravel(), pairs, atol=1e-10)


class TestRankingLoss:

    def test_gap_equal_to_margin(self):
        assert ranking_loss(2.0, [1.0, 1.0], margin=1.0) == 0.0

    def test_equal_scores(self):
        assert ranking_loss(0.3, [0.3], margin=1.0) == 1.0

    def test_mixed_gaps(self):
        assert ranking_loss(2.0, [0.0, 1.5], margin=1.0) == pytest.approx(0.25, abs=1e-12)

    def test_saturated_hinge_has_no_gradient(self):
        s_pos = np.array([3.0, 2.5])
        s_neg = np.array([[1.0, 0.5], [0.4, 0.0]])
        per_sample, d_pos, d_neg, _ = hinge_block(s_pos, s_neg, margin=1.0)
        assert np.array_equal(per_sample, np.zeros(2))
        assert not d_pos.any() and not d_neg.any()


class TestDistanceCorrelation:

    def test_identical_blocks(self):
        x = np.random.default_rng(0).normal(size=(20, 3))
        assert distance_correlation(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_constant_block(self):
        rng = np.random.default_rng(1)
        assert distance_correlation(np.ones((10, 2)), rng.normal(size=(10, 2))) == 0.0

    def test_independent_samples_are_weakly_correlated(self):
        values = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            values.append(distance_correlation(rng.normal(size=512), rng.normal(size=512)))
        assert np.mean(values) < 0.15

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(15, 2)), rng.normal(size=(15, 4)) + rng.normal(size=(15, 1))
        forward = distance_correlation(x, y)
        assert forward == pytest.approx(distance_correlation(y, x), abs=1e-12)
        assert 0.0 <= forward <= 1.0

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            distance_correlation(np.ones((1, 2)), np.ones((1, 2)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(10, 2)), rng.normal(size=(10, 3))
        _, grad_x, grad_y = distance_correlation_grad(x, y)
        eps = 1e-6
        for block, grad, other in ((x, grad_x, y), (y, grad_y, x)):
            numeric = np.empty_like(block)
            for index in np.ndindex(block.shape):
                saved = block[index]
                block[index] = saved + eps
                upper = distance_correlation(x, y)
                block[index] = saved - eps
                lower = distance_correlation(x, y)
                block[index] = saved
                numeric[index] = (upper - lower) / (2 * eps)
            assert relative_error(grad, numeric) < 1e-6


class TestTotalLoss:

    def test_zero_params_unit_loss(self, small_hyper):
        hyper = HyperParams(**dict(SMALL, dcor_weight=0.0))
        features = synth_features(0, 5, 5, 6)
        batch = random_batch(np.random.default_rng(0), 4, 6, 8, 2)
        result = total_loss(batch, zero_params(hyper, 4, 6), features, hyper)
        assert result.value == 1.0
        assert result.regularizer == 0.0

    def test_gradients_match_finite_differences(self):
        hyper = HyperParams(**dict(SMALL, dcor_weight=0.1))
        num_users, num_items, eps = 6, 12, 1e-4
        checked = 0
        seed = 0
        while checked < 50:
            seed += 1
            rng = np.random.default_rng(seed)
            params = random_params(hyper, num_users, num_items, rng)
            features = synth_features(seed, 5, 5, num_items)
            batch = random_batch(rng, num_users, num_items, 16, hyper.negatives)
            # central differences are only meaningful away from LeakyReLU/hinge kinks
            if total_loss(batch, params, features, hyper, with_grad=False).kink_distance <= 10 * eps:
                continue
            errors = check_gradients(batch, params, features, hyper, eps=eps)
            assert max(errors.values()) < 1e-4, (seed, errors)
            checked += 1

    def test_regularizer_contributes(self, small_hyper):
        rng = np.random.default_rng(4)
        params = random_params(small_hyper, 5, 9, rng)
        features = synth_features(4, 5, 5, 9)
        batch = random_batch(rng, 5, 9, 12, 2)
        plain = total_loss(batch, params, features, HyperParams(**dict(SMALL, dcor_weight=0.0)))
        regularized = total_loss(batch, params, features, HyperParams(**dict(SMALL, dcor_weight=0.5)))
        assert regularized.regularizer > 0
        assert regularized.value == pytest.approx(plain.value + 0.5 * regularized.regularizer, abs=1e-12)

    def test_non_finite_loss_names_parameter(self, small_hyper):
        params = random_params(small_hyper, 3, 5, np.random.default_rng(0))
        params['user_embedding'][1, 0] = np.inf
        features = synth_features(0, 5, 5, 5)
        batch = Batch(np.array([1, 1]), np.array([0, 1]), np.array([[2, 3], [3, 4]]))
        with np.errstate(all='ignore'), pytest.raises(NonFiniteLossError) as excinfo:
            total_loss(batch, params, features, small_hyper)
        assert excinfo.value.param_name == 'user_embedding'


class TestAdamW:

    @staticmethod
    def scalar_model(value):
        hyper = HyperParams(**SMALL)
        params = zero_params(hyper, 1, 1)
        params['user_embedding'][:] = value
        return params

    def test_zero_gradient_no_decay(self):
        params = self.scalar_model(1.0)
        before = params.flatten()
        adamw_step(params, params.zeros_like(), AdamWState(), lr=0.1, weight_decay=0.0)
        assert np.array_equal(params.flatten(), before)

    def test_decoupled_decay(self):
        params = self.scalar_model(1.0)
        adamw_step(params, params.zeros_like(), AdamWState(), lr=0.1, weight_decay=0.1)
        assert np.allclose(params['user_embedding'], 0.99, atol=1e-12)

    def test_first_step_is_learning_rate(self):
        params = self.scalar_model(0.0)
        grads = params.zeros_like()
        grads['user_embedding'][:] = 1.0
        adamw_step(params, grads, AdamWState.for_params(params), lr=0.001, weight_decay=0.0)
        assert np.allclose(params['user_embedding'], -0.001, atol=1e-9)


@pytest.fixture
def toy_client(make_clustered_log):
    log = make_clustered_log(num_users=10, num_items=30, per_user=5, seed=3)
    mask = np.zeros((log.num_users, log.num_items), dtype=bool)
    mask[log.users, log.items] = True
    return log, LocalData(client_id=0, pairs=np.column_stack([log.users, log.items]), positive_mask=mask)


TOY = dict(dim=8, factors=2, text_dim=8, visual_dim=8, text_hidden=8, visual_hidden=8,
           attention_hidden=4, negatives=3, batch_size=10)


class TestTrainLocal:

    def test_zero_epochs(self, toy_client):
        log, data = toy_client
        hyper = HyperParams(**dict(TOY, local_epochs=0))
        params = init_params(hyper, log.num_users, log.num_items, seed=0)
        features = synth_features(0, 8, 8, log.num_items)
        update = train_local(params, data, features, hyper, np.random.default_rng(0))
        assert not update.delta.flatten().any()
        assert update.num_samples == 50
        assert update.work_units == 0
        assert len(update.sample_losses) == 50

    def test_deterministic(self, toy_client):
        log, data = toy_client
        hyper = HyperParams(**TOY)
        params = init_params(hyper, log.num_users, log.num_items, seed=1)
        features = synth_features(1, 8, 8, log.num_items)
        first = train_local(params, data, features, hyper, np.random.default_rng(42))
        second = train_local(params, data, features, hyper, np.random.default_rng(42))
        assert np.array_equal(first.delta.flatten(), second.delta.flatten())
        assert np.array_equal(first.sample_losses, second.sample_losses)

    def test_global_params_untouched(self, toy_client):
        log, data = toy_client
        hyper = HyperParams(**TOY)
        params = init_params(hyper, log.num_users, log.num_items, seed=2)
        before = params.flatten()
        train_local(params, data, synth_features(2, 8, 8, log.num_items), hyper, np.random.default_rng(0))
        assert np.array_equal(params.flatten(), before)

    def test_one_epoch_reduces_loss(self, toy_client):
        from .network import ranking_losses
        from .training import make_batch

        log, data = toy_client
        hyper = HyperParams(**dict(TOY, lr=0.01, local_epochs=1, dropout=0.0))
        before, after = [], []
        for seed in range(5):
            params = init_params(hyper, log.num_users, log.num_items, seed=seed)
            features = synth_features(seed, 8, 8, log.num_items)
            fixed_batch = make_batch(data.pairs, data.positive_mask, hyper.negatives, np.random.default_rng(100 + seed))
            update = train_local(params, data, features, hyper, np.random.default_rng(seed))
            before.append(ranking_losses(params, features, hyper, fixed_batch).mean())
            after.append(ranking_losses(params + update.delta, features, hyper, fixed_batch).mean())
        assert np.mean(after) <= np.mean(before)

    def test_empty_client(self, toy_client):
        log, data = toy_client
        hyper = HyperParams(**TOY)
        empty = LocalData(client_id=3, pairs=np.empty((0, 2), dtype=np.int64), positive_mask=data.positive_mask)
        with pytest.raises(ValueError):
            train_local(init_params(hyper, log.num_users, log.num_items, 0), empty,
                        synth_features(0, 8, 8, log.num_items), hyper,
                        np.random.default_rng(0))


class TestParams:

    def test_factors_must_divide_dim(self):
        with pytest.raises(ValueError):
            HyperParams(dim=10, factors=4)

    def test_init_is_seeded(self, small_hyper):
        a = init_params(small_hyper, 4, 6, seed=3)
        b = init_params(small_hyper, 4, 6, seed=3)
        assert np.array_equal(a.flatten(), b.flatten())
        assert not a['attn_b1'].any()

    def test_checkpoint_round_trip(self, tmp_path, small_hyper):
        params = init_params(small_hyper, 4, 6, seed=0)
        size = save_checkpoint(tmp_path / 'model.bin', params, {'round': 3})
        assert size == params.payload_bytes == 4 * params.num_parameters
        loaded, metadata = load_checkpoint(tmp_path / 'model.bin')
        assert metadata == {'round': 3}
        assert loaded.shapes() == params.shapes()
        assert np.allclose(loaded.flatten(), params.flatten(), atol=1e-6)

    def test_shape_mismatch_arithmetic(self, small_hyper):
        with pytest.raises(ValueError):
            init_params(small_hyper, 4, 6, 0) - init_params(small_hyper, 5, 6, 0)

    def test_feature_bundle_shape_is_enforced(self):
        with pytest.raises(ValueError):
            ModalityBundle(text=np.zeros((3, 2)), visual=np.zeros((4, 2)), source='synthetic')
