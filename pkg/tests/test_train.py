"""Loss, BPTT gradients, RMSprop, training loop behavior."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickbait_gru.errors import NumericError
from clickbait_gru.ingest import LabeledDataset
from clickbait_gru.nn import (
    forward_batch,
    init_model,
    make_dropout_masks,
    parameter_arrays,
    predict_batch,
)
from clickbait_gru.rng import named_rng
from clickbait_gru.text import EmbeddingTable, TokenSequence
from clickbait_gru.train import (
    RmsPropState,
    TrainConfig,
    backprop,
    encode_dataset,
    fit,
    grad_check,
    mse_loss,
    rmsprop_update,
    write_history,
)
from conftest import make_judgment, make_record, synth_dataset, tiny_model


def seq_of(ids, length=None):
    ids = np.asarray(ids, dtype=np.int32)
    return TokenSequence(ids=ids, length=len(ids) if length is None else length)


SMALL_BATCH = [
    (seq_of([2, 3, 4, 0, 0], length=3), 0.8),
    (seq_of([5, 6, 0, 0, 0], length=2), 0.2),
    (seq_of([7, 8, 9, 2, 3], length=5), 1.0),
]


class TestMseLoss:
    def test_perfect_predictions(self):
        assert mse_loss([0.1, 0.9], [0.1, 0.9]) == 0.0

    def test_single_example(self):
        assert mse_loss([0.5], [1.0]) == 0.25

    def test_opposite_extremes(self):
        assert mse_loss([0.0, 1.0], [1.0, 0.0]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mse_loss([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mse_loss([0.1], [0.1, 0.2])

    @given(
        st.lists(
            st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30
        ),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=80, deadline=None)
    def test_order_invariant_exactly(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        a = mse_loss([p for p, _ in pairs], [t for _, t in pairs])
        b = mse_loss([p for p, _ in shuffled], [t for _, t in shuffled])
        assert a == b  # fsum makes the reduction exactly rounded


class TestBackprop:
    def test_zero_head_bias_gradient_hand_formula(self):
        """With a zero head every prediction is 0.5; db has a closed form."""
        m = tiny_model(seed=0)
        m.head.w[:] = 0.0
        m.head.b[:] = 0.0
        targets = [y for _, y in SMALL_BATCH]
        _, grads = backprop(m, SMALL_BATCH, clip=None)
        expected = sum(2.0 * (0.5 - y) * 0.25 for y in targets) / len(targets)
        np.testing.assert_allclose(grads["head.b"], [expected], rtol=1e-12)

    def test_zero_length_batch_touches_only_head(self):
        m = tiny_model(seed=1)
        loss, grads = backprop(m, [(seq_of([0, 0], length=0), 0.9)], clip=None)
        assert loss > 0.0
        for name, g in grads.items():
            if name == "head.b":
                assert np.any(g != 0.0)
            else:
                np.testing.assert_array_equal(g, 0.0)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            backprop(tiny_model(), [])

    def test_clip_bounds_gradients(self):
        m = tiny_model(seed=2)
        _, grads = backprop(m, SMALL_BATCH, clip=1e-4)
        for g in grads.values():
            assert np.all(np.abs(g) <= 1e-4)

    def test_loss_matches_mse_loss(self):
        m = tiny_model(seed=2)
        loss, _ = backprop(m, SMALL_BATCH, clip=None)
        ids = np.stack([s.ids for s, _ in SMALL_BATCH])
        lengths = np.array([s.length for s, _ in SMALL_BATCH])
        preds, _ = forward_batch(m, ids, lengths)
        assert loss == mse_loss(preds, [y for _, y in SMALL_BATCH])

    def test_batch_order_invariant_loss(self):
        m = tiny_model(seed=2)
        a, _ = backprop(m, SMALL_BATCH, clip=None)
        b, _ = backprop(m, SMALL_BATCH[::-1], clip=None)
        assert a == b

    def test_nonfinite_loss_names_offending_parameter(self):
        m = tiny_model(seed=2)
        m.head.b[:] = np.nan
        with pytest.raises(NumericError, match="head.b"):
            backprop(m, SMALL_BATCH)

    def test_nonfinite_gradient_named(self):
        # an inf embedding survives the saturating forward pass but turns
        # into 0 * inf = nan inside the weight gradients
        m = tiny_model(seed=2)
        m.embedding.matrix[2, 0] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(NumericError, match="fwd."):
            backprop(m, SMALL_BATCH)

    def test_gradients_cover_every_parameter(self):
        m = tiny_model(seed=2)
        _, grads = backprop(m, SMALL_BATCH)
        params = parameter_arrays(m)
        assert set(grads) == set(params)
        for name in params:
            assert grads[name].shape == params[name].shape

    def test_dropout_masks_gradients_match_finite_differences(self):
        """The masked loss is deterministic given fixed masks, so FD applies."""
        m = tiny_model(seed=5, dropout_embed=0.3, dropout_gru_in=0.3, dropout_gru_out=0.5)
        batch = SMALL_BATCH
        ids = np.stack([s.ids for s, _ in batch])
        lengths = np.array([s.length for s, _ in batch])
        targets = [y for _, y in batch]
        masks = make_dropout_masks(m, len(batch), ids.shape[1], named_rng(3, "dropout"))

        def loss_now():
            preds, _ = forward_batch(m, ids, lengths, masks=masks)
            return mse_loss(preds, targets)

        _, grads = backprop(m, batch, masks=masks, clip=None)
        step = 1e-6
        rng = np.random.default_rng(0)
        for name, arr in parameter_arrays(m).items():
            flat = arr.reshape(-1)
            sample = rng.choice(flat.size, size=min(8, flat.size), replace=False)
            for i in sample:
                saved = flat[i]
                flat[i] = saved + step
                plus = loss_now()
                flat[i] = saved - step
                minus = loss_now()
                flat[i] = saved
                numeric = (plus - minus) / (2 * step)
                analytic = grads[name].reshape(-1)[i]
                assert abs(analytic - numeric) < 1e-6, f"{name}[{i}]"


class TestGradCheck:
    def test_tiny_model_passes(self):
        m = tiny_model(seed=3)
        report = grad_check(m, SMALL_BATCH, tolerance=1e-4)
        assert report.passed, report.per_array
        assert set(report.per_array) == set(parameter_arrays(m))

    def test_zero_model_at_target_half_has_zero_bias_gradient(self):
        m = tiny_model(seed=3)
        for arr in parameter_arrays(m).values():
            arr[:] = 0.0
        batch = [(seq_of([2, 3]), 0.5)]
        _, grads = backprop(m, batch, clip=None)
        np.testing.assert_array_equal(grads["head.b"], 0.0)
        assert grad_check(m, batch).passed

    def test_repeated_runs_identical(self):
        m = tiny_model(seed=3)
        a = grad_check(m, SMALL_BATCH)
        b = grad_check(m, SMALL_BATCH)
        assert a.per_array == b.per_array

    def test_single_precision_rejected(self):
        m = tiny_model(seed=3, dtype=np.float32)
        with pytest.raises(ValueError, match="float64"):
            grad_check(m, SMALL_BATCH)

    def test_dropout_enabled_rejected(self):
        m = tiny_model(seed=3, dropout_embed=0.2)
        with pytest.raises(ValueError, match="dropout"):
            grad_check(m, SMALL_BATCH)


class TestRmsprop:
    def one_param(self, value=1.0, grad=0.1, acc=None):
        params = {"p": np.array([value])}
        grads = {"p": np.array([grad])}
        state = RmsPropState()
        if acc is not None:
            state.acc["p"] = np.array([acc])
        return params, grads, state

    def test_zero_gradient_leaves_params_decays_accumulator(self):
        params, grads, state = self.one_param(grad=0.0, acc=1.0)
        rmsprop_update(params, grads, state, TrainConfig())
        assert params["p"][0] == 1.0
        np.testing.assert_allclose(state.acc["p"], [0.9])

    def test_first_step_closed_form(self):
        cfg = TrainConfig()
        g = 0.3
        params, grads, state = self.one_param(grad=g)
        rmsprop_update(params, grads, state, cfg)
        expected = 1.0 - cfg.learning_rate * g / (
            math.sqrt((1 - cfg.rho) * g * g) + cfg.epsilon
        )
        np.testing.assert_allclose(params["p"], [expected], rtol=1e-12)

    def test_constant_gradient_step_approaches_lr(self):
        cfg = TrainConfig()
        params, grads, state = self.one_param(grad=0.25)
        prev = params["p"][0]
        for _ in range(400):
            prev = params["p"][0]
            rmsprop_update(params, grads, state, cfg)
        final_step = prev - params["p"][0]
        # accumulator saturates at g^2, so the step tends to lr * sign(g)
        assert math.isclose(final_step, cfg.learning_rate, rel_tol=0.02)

    def test_positive_accumulator_descends_quadratic(self):
        cfg = TrainConfig()
        theta = np.array([1.0])
        params = {"p": theta}
        state = RmsPropState()
        state.acc["p"] = np.array([1.0])
        loss_before = theta[0] ** 2
        rmsprop_update(params, {"p": np.array([2.0 * theta[0]])}, state, cfg)
        assert theta[0] ** 2 < loss_before

    def test_accumulators_stay_nonnegative(self):
        params, grads, state = self.one_param(grad=-4.0)
        for _ in range(50):
            rmsprop_update(params, grads, state, TrainConfig())
            assert state.acc["p"][0] >= 0.0

    def test_shape_mismatch_rejected(self):
        params = {"p": np.zeros(3)}
        grads = {"p": np.zeros(4)}
        with pytest.raises(ValueError):
            rmsprop_update(params, grads, RmsPropState(), TrainConfig())


class TestTrainConfig:
    def test_default_recipe_values(self):
        cfg = TrainConfig()
        assert cfg.batch_size == 64
        assert cfg.d == 100
        assert cfg.h == 128
        assert (cfg.dropout_embed, cfg.dropout_gru_in, cfg.dropout_gru_out) == (0.2, 0.2, 0.5)

    def test_invalid_values_rejected(self):
        for kwargs in (
            {"batch_size": 0},
            {"learning_rate": 0.0},
            {"epochs": -1},
            {"dropout_embed": 1.0},
            {"text_field": "postMedia"},
        ):
            with pytest.raises(ValueError):
                TrainConfig(**kwargs)


def fit_setup(n=24, d=6, seed=0):
    ds = synth_dataset(n, seed=seed)
    from clickbait_gru.text import build_vocab, tokenize

    vocab = build_vocab(tokenize(r.text) for r, _ in ds)
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0, 0.3, (vocab.size, d)).astype(np.float32)
    matrix[0] = 0.0
    return ds, vocab, EmbeddingTable(matrix=matrix)


class TestFit:
    def small_cfg(self, **over):
        base = dict(
            batch_size=8, epochs=2, d=6, h=4, max_len=12, seed=1,
            dropout_embed=0.0, dropout_gru_in=0.0, dropout_gru_out=0.0,
        )
        base.update(over)
        return TrainConfig(**base)

    def test_epochs_zero_returns_initialized_model(self):
        ds, vocab, emb = fit_setup()
        cfg = self.small_cfg(epochs=0)
        model, history = fit(ds, ds, cfg, vocab, emb)
        assert len(history) == 1 and history[0].epoch == 0
        fresh = init_model(emb, cfg.h, cfg.seed)
        for name, arr in parameter_arrays(model).items():
            np.testing.assert_array_equal(arr, parameter_arrays(fresh)[name])

    def test_history_has_row_per_epoch(self):
        ds, vocab, emb = fit_setup()
        _, history = fit(ds, ds, self.small_cfg(epochs=3), vocab, emb)
        assert [row.epoch for row in history] == [0, 1, 2, 3]

    def test_same_seed_reproduces_history_and_params(self):
        ds, vocab, emb = fit_setup()
        cfg = self.small_cfg(epochs=2, dropout_embed=0.2, dropout_gru_out=0.3)
        m1, h1 = fit(ds, ds, cfg, vocab, emb)
        m2, h2 = fit(ds, ds, cfg, vocab, emb)
        assert [(r.train_mse, r.valid_mse) for r in h1] == [
            (r.train_mse, r.valid_mse) for r in h2
        ]
        for name, arr in parameter_arrays(m1).items():
            np.testing.assert_array_equal(arr, parameter_arrays(m2)[name])

    def test_returned_model_is_best_validation_epoch(self):
        ds, vocab, emb = fit_setup(n=30)
        valid = synth_dataset(12, seed=9)
        cfg = self.small_cfg(epochs=4, learning_rate=5e-3)
        model, history = fit(ds, valid, cfg, vocab, emb)
        best = min(row.valid_mse for row in history)
        pairs = encode_dataset(valid, vocab, cfg.max_len)
        preds = predict_batch(model, [s for s, _ in pairs])
        achieved = mse_loss(preds, [t for _, t in pairs])
        assert math.isclose(achieved, best, rel_tol=1e-9)
        assert best <= history[0].valid_mse

    def test_training_reduces_loss(self):
        ds, vocab, emb = fit_setup(n=32)
        cfg = self.small_cfg(epochs=10, learning_rate=1e-2)
        _, history = fit(ds, ds, cfg, vocab, emb)
        assert history[-1].train_mse < history[0].train_mse * 0.9

    def test_nonfinite_embeddings_abort_with_diagnostic(self):
        ds, vocab, emb = fit_setup()
        emb.matrix[2:, :] = np.nan
        with np.errstate(invalid="ignore"), pytest.raises(NumericError, match="epoch 0"):
            fit(ds, ds, self.small_cfg(), vocab, emb)

    def test_empty_dataset_rejected(self):
        ds, vocab, emb = fit_setup()
        empty = LabeledDataset(records=[])
        with pytest.raises(ValueError):
            fit(empty, ds, self.small_cfg(), vocab, emb)

    def test_dimension_mismatch_rejected(self):
        ds, vocab, emb = fit_setup(d=6)
        with pytest.raises(ValueError, match="dim"):
            fit(ds, ds, self.small_cfg(d=7), vocab, emb)

    def test_targets_are_judgment_means(self):
        ds, vocab, emb = fit_setup()
        pairs = encode_dataset(ds, vocab, max_len=12)
        for (rec, judgment), (_, target) in zip(ds, pairs):
            assert target == judgment.mean


class TestWriteHistory:
    def test_csv_round_trips_floats_exactly(self):
        ds, vocab, emb = fit_setup()
        _, history = fit(ds, ds, TrainConfig(
            batch_size=8, epochs=1, d=6, h=4, max_len=12, seed=1,
            dropout_embed=0.0, dropout_gru_in=0.0, dropout_gru_out=0.0,
        ), vocab, emb)
        out = io.StringIO()
        write_history(history, out)
        lines = out.getvalue().splitlines()
        assert lines[0] == "epoch,train_mse,valid_mse"
        assert len(lines) == len(history) + 1
        for row, line in zip(history, lines[1:]):
            epoch, train_mse, valid_mse = line.split(",")
            assert int(epoch) == row.epoch
            assert float(train_mse) == row.train_mse
            assert float(valid_mse) == row.valid_mse
