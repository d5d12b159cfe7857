import math

import numpy as np
import pytest

from fairlift.data import CameraModel, normalize, synth_generate
from fairlift.model import NetworkConfig, params_init
from fairlift.train import (
    TrainConfig,
    TrainingDivergedError,
    adam_step,
    init_train_state,
    learning_rate_at,
    linear_baseline_mpjpe,
    mse_loss,
    split_indices,
    train,
)


class TestMseLoss:
    def test_zero_at_match(self, rng):
        pred = rng.normal(size=(3, 17, 3))
        loss, grad = mse_loss(pred, pred)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros_like(pred))

    def test_hand_case_single_joint(self):
        pred = np.array([[[3.0, 4.0, 0.0]]])
        target = np.zeros((1, 1, 3))
        loss, _ = mse_loss(pred, target)
        assert loss == 25.0  # 3^2 + 4^2

    def test_batch_averaging(self):
        pred = np.ones((4, 2, 3))
        target = np.zeros((4, 2, 3))
        loss, _ = mse_loss(pred, target)
        assert loss == pytest.approx(6.0)  # 2 joints * 3 coords per sample

    def test_gradient_matches_finite_difference(self, rng):
        pred = rng.normal(size=(2, 5, 3))
        target = rng.normal(size=(2, 5, 3))
        _, grad = mse_loss(pred, target)
        step = 1e-6
        for _ in range(20):
            b = rng.integers(0, 2)
            j = rng.integers(0, 5)
            c = rng.integers(0, 3)
            bumped = pred.copy()
            bumped[b, j, c] += step
            upper, _ = mse_loss(bumped, target)
            bumped[b, j, c] -= 2 * step
            lower, _ = mse_loss(bumped, target)
            numeric = (upper - lower) / (2 * step)
            assert abs(numeric - grad[b, j, c]) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 3)))


class TestAdamStep:
    def _setup(self, lr=1e-3, **kwargs):
        cfg = NetworkConfig(num_layers=2, hidden_width=6, hops=1)
        params = params_init(cfg, seed=0)
        tcfg = TrainConfig(epochs=1, lr=lr, **kwargs)
        state = init_train_state(params, tcfg)
        return cfg, params, tcfg, state

    def test_zero_gradient_leaves_params(self):
        _, params, tcfg, state = self._setup()
        before = {n: t.copy() for n, t in params.named_tensors(trainable_only=True)}
        grads = {n: np.zeros_like(t) for n, t in params.named_tensors(trainable_only=True)}
        adam_step(state, params, grads, tcfg)
        for name, tensor in params.named_tensors(trainable_only=True):
            np.testing.assert_array_equal(tensor, before[name])
        assert state.step == 1

    def test_first_step_size_is_lr_regardless_of_scale(self):
        # bias correction makes the first update ~lr * sign(grad)
        _, params, tcfg, state = self._setup(lr=1e-3)
        before = {n: t.copy() for n, t in params.named_tensors(trainable_only=True)}
        grads = {
            n: np.full_like(t, 1234.5) for n, t in params.named_tensors(trainable_only=True)
        }
        adam_step(state, params, grads, tcfg)
        for name, tensor in params.named_tensors(trainable_only=True):
            step_taken = before[name] - tensor
            np.testing.assert_allclose(step_taken, 1e-3, rtol=1e-6)

    def test_lr_decay_after_boundary(self):
        _, params, tcfg, state = self._setup(lr=1e-3, decay_every_steps=10)
        grads = {n: np.ones_like(t) for n, t in params.named_tensors(trainable_only=True)}
        for _ in range(10):
            adam_step(state, params, grads, tcfg)
        assert state.current_lr == pytest.approx(0.00096, abs=0.0)

    def test_schedule_formula_exact(self):
        tcfg = TrainConfig(lr=1e-3, decay_factor=0.96, decay_every_steps=7)
        for step in (0, 3, 7, 13, 14, 100):
            assert learning_rate_at(tcfg, step) == 1e-3 * 0.96 ** (step // 7)


@pytest.fixture(scope="module")
def small_dataset():
    skeleton = __import__("fairlift.graph", fromlist=["x"]).default_human36m_skeleton()
    return synth_generate(skeleton, CameraModel(), n=300, noise_std_2d=0.0, seed=99)


class TestSplit:
    def test_deterministic_and_disjoint(self):
        a_train, a_eval = split_indices(100, 0.2, seed=5)
        b_train, b_eval = split_indices(100, 0.2, seed=5)
        np.testing.assert_array_equal(a_train, b_train)
        np.testing.assert_array_equal(a_eval, b_eval)
        assert set(a_train) & set(a_eval) == set()
        assert len(a_train) + len(a_eval) == 100
        assert len(a_eval) == 20

    def test_different_seed_differs(self):
        a_train, _ = split_indices(100, 0.2, seed=5)
        b_train, _ = split_indices(100, 0.2, seed=6)
        assert not np.array_equal(a_train, b_train)


class TestTrainLoop:
    def _configs(self, **train_kwargs):
        mcfg = NetworkConfig(num_layers=3, hidden_width=12, hops=3)
        defaults = dict(epochs=2, batch_size=64, lr=1e-3, seed=3)
        defaults.update(train_kwargs)
        return mcfg, TrainConfig(**defaults)

    def test_zero_lr_changes_nothing(self, small_dataset):
        # without normalization buffers the whole model state is frozen,
        # so the history is exactly flat
        mcfg = NetworkConfig(num_layers=3, hidden_width=12, hops=3, use_batchnorm=False)
        tcfg = TrainConfig(epochs=3, batch_size=64, lr=0.0, seed=3)
        result = train(mcfg, tcfg, small_dataset)
        reference = params_init(mcfg, tcfg.seed)
        for (name, tensor), (_, ref) in zip(
            result.params.named_tensors(), reference.named_tensors()
        ):
            np.testing.assert_array_equal(tensor, ref, err_msg=name)
        metrics = {row.eval_mpjpe for row in result.history.rows}
        assert len(metrics) == 1

    def test_zero_lr_trainables_frozen_with_batchnorm(self, small_dataset):
        # train-mode forwards still refresh running statistics, but no
        # trainable tensor may move
        mcfg, tcfg = self._configs(lr=0.0, epochs=2)
        result = train(mcfg, tcfg, small_dataset)
        reference = params_init(mcfg, tcfg.seed)
        for (name, tensor), (_, ref) in zip(
            result.params.named_tensors(trainable_only=True),
            reference.named_tensors(trainable_only=True),
        ):
            np.testing.assert_array_equal(tensor, ref, err_msg=name)

    def test_same_seed_reproduces_history(self, small_dataset):
        mcfg, tcfg = self._configs(epochs=2)
        first = train(mcfg, tcfg, small_dataset)
        second = train(mcfg, tcfg, small_dataset)
        assert first.history.csv_lines() == second.history.csv_lines()
        for (name, a), (_, b) in zip(
            first.params.named_tensors(), second.params.named_tensors()
        ):
            np.testing.assert_array_equal(a, b, err_msg=name)

    def test_history_row_count_matches_epochs(self, small_dataset):
        mcfg, tcfg = self._configs(epochs=1)
        result = train(mcfg, tcfg, small_dataset)
        assert len(result.history.rows) == 1

    def test_loss_decreases_on_synthetic_task(self, small_dataset):
        mcfg, tcfg = self._configs(epochs=8)
        result = train(mcfg, tcfg, small_dataset)
        losses = [row.train_loss for row in result.history.rows]
        assert losses[-1] < losses[0]
        assert result.history.rows[-1].eval_mpjpe < result.history.initial_mpjpe

    def test_diverged_loss_raises_with_diagnostics(self, small_dataset):
        # batchnorm keeps huge weights in check mid-network, but the raw
        # residual path overflows float64 once weights reach ~1e200
        mcfg, tcfg = self._configs(lr=1e200, epochs=3)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(mcfg, tcfg, small_dataset)
        assert excinfo.value.step > 0
        assert "lr" in str(excinfo.value)

    def test_checkpoint_callback_fires(self, small_dataset):
        mcfg, tcfg = self._configs(epochs=4, checkpoint_every=2)
        seen = []
        train(mcfg, tcfg, small_dataset, checkpoint_cb=lambda e, p, s: seen.append(e))
        assert seen == [2, 4]

    def test_best_params_track_best_epoch(self, small_dataset):
        mcfg, tcfg = self._configs(epochs=4)
        result = train(mcfg, tcfg, small_dataset)
        best_rows = [r for r in result.history.rows if r.eval_mpjpe == result.state.best_eval]
        if result.best_epoch == 0:
            assert result.state.best_eval == result.history.initial_mpjpe
        else:
            assert best_rows and best_rows[0].epoch == result.best_epoch


class TestLinearBaseline:
    def test_baseline_is_finite_and_nonzero(self, small_dataset):
        train_idx, eval_idx = split_indices(len(small_dataset), 0.2, seed=0)
        train_raw = small_dataset.subset(train_idx)
        eval_raw = small_dataset.subset(eval_idx)
        train_norm, stats = normalize(train_raw)
        eval_norm, _ = normalize(eval_raw, stats)
        gt = eval_raw.y3d - eval_raw.y3d[:, 0:1, :]
        value = linear_baseline_mpjpe(
            train_norm.x2d, train_norm.y3d, eval_norm.x2d, gt, stats, 0
        )
        assert math.isfinite(value)
        assert value > 1.0  # the lifting task is not linearly solvable
