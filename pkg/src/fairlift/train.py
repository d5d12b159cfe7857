"""Loss, optimizer, learning-rate schedule, and the training loop.

Training minimizes the mean squared error between predicted and target
3D poses (normalized, root-relative) with Adam, stepping the learning
rate down by a fixed factor every ``decay_every_steps`` optimizer steps.
Everything is deterministic for a given seed: the train/eval split, the
parameter initialization, and the per-epoch shuffles each draw from
their own seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .data import Dataset, NormStats, denormalize, normalize
from .graph import build_operators
from .metrics import mpjpe, pa_mpjpe
from .model import (
    NetworkConfig,
    NetworkParams,
    network_backward,
    network_forward,
    params_init,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the step, learning rate, and loss."""

    def __init__(self, step: int, lr: float, loss: float):
        self.step = step
        self.lr = lr
        self.loss = loss
        super().__init__(
            f"training diverged at step {step} (lr {lr:.6g}): loss is {loss!r}"
        )


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    decay_factor: float = 0.96
    decay_every_steps: int = 100_000
    seed: int = 0
    checkpoint_every: int = 0
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every_steps < 1:
            raise ValueError("epochs, batch_size and decay_every_steps must be positive")
        if self.lr < 0.0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0 (0 disables)")


@dataclass
class TrainState:
    """Adam moments (flat, keyed by tensor name) plus schedule position."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    current_lr: float = 0.0
    best_eval: float = math.inf


def init_train_state(params: NetworkParams, cfg: TrainConfig) -> TrainState:
    m = {}
    v = {}
    for name, tensor in params.named_tensors(trainable_only=True):
        m[name] = np.zeros(tensor.size)
        v[name] = np.zeros(tensor.size)
    return TrainState(m=m, v=v, step=0, current_lr=cfg.lr)


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    """Schedule value after ``step`` completed optimizer steps."""
    return cfg.lr * cfg.decay_factor ** (step // cfg.decay_every_steps)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Per-batch squared error ``sum_joints ||y - y_hat||^2 / batch`` and its
    exact gradient with respect to ``pred``."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} does not match target shape {t.shape}")
    batch = 1 if p.ndim == 2 else p.shape[0]
    diff = p - t
    loss = float((diff * diff).sum() / batch)
    grad = (2.0 / batch) * diff
    return loss, grad


def adam_step(
    state: TrainState, params: NetworkParams, grads: dict[str, np.ndarray], cfg: TrainConfig
) -> tuple[NetworkParams, TrainState]:
    """One bias-corrected Adam update, in place, at the scheduled rate."""
    lr_t = learning_rate_at(cfg, state.step)
    t = state.step + 1
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name, tensor in params.named_tensors(trainable_only=True):
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise ValueError(f"gradient for {name} has shape {grad.shape}, expected {tensor.shape}")
        backend.adam_update(
            tensor.ravel(),
            np.ascontiguousarray(grad, dtype=np.float64).ravel(),
            state.m[name],
            state.v[name],
            lr_t,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
            bias1,
            bias2,
        )
    state.step = t
    state.current_lr = learning_rate_at(cfg, t)
    return params, state


# ---------------------------------------------------------------------------
# Training loop.


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    eval_mpjpe: float
    eval_pa_mpjpe: float
    lr: float


@dataclass
class TrainHistory:
    initial_mpjpe: float
    initial_pa_mpjpe: float
    rows: list[HistoryRow] = field(default_factory=list)

    def csv_lines(self) -> list[str]:
        lines = ["epoch,train_loss,eval_mpjpe,eval_pa_mpjpe,lr"]
        for row in self.rows:
            lines.append(
                f"{row.epoch},{row.train_loss!r},{row.eval_mpjpe!r},"
                f"{row.eval_pa_mpjpe!r},{row.lr!r}"
            )
        return lines

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")

    def rows_as_dicts(self) -> list[dict]:
        return [vars(row).copy() for row in self.rows]


@dataclass
class TrainResult:
    params: NetworkParams
    best_params: NetworkParams
    best_epoch: int
    history: TrainHistory
    stats: NormStats
    state: TrainState
    train_indices: np.ndarray
    eval_indices: np.ndarray


def split_indices(n: int, eval_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic disjoint train/eval index split."""
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    rng = np.random.default_rng([int(seed), 0])
    perm = rng.permutation(n)
    n_eval = min(max(1, int(round(n * eval_fraction))), n - 1)
    return perm[n_eval:], perm[:n_eval]


def evaluate_split(
    model_cfg: NetworkConfig,
    ops,
    params: NetworkParams,
    x2d_norm: np.ndarray,
    gt_mm_root_rel: np.ndarray,
    stats: NormStats,
    root: int,
) -> tuple[float, float]:
    """Mean root-aligned and Procrustes-aligned errors (mm) over a split."""
    pred_norm, _ = network_forward(model_cfg, ops, params, x2d_norm, mode="eval")
    pred_mm = denormalize(pred_norm, stats)
    errors = [mpjpe(pred_mm[i], gt_mm_root_rel[i], root) for i in range(len(pred_mm))]
    pa_errors = [pa_mpjpe(pred_mm[i], gt_mm_root_rel[i]) for i in range(len(pred_mm))]
    return float(np.mean(errors)), float(np.mean(pa_errors))


def linear_baseline_mpjpe(
    train_x2d_norm: np.ndarray,
    train_y3d_norm: np.ndarray,
    eval_x2d_norm: np.ndarray,
    eval_gt_mm_root_rel: np.ndarray,
    stats: NormStats,
    root: int,
) -> float:
    """Closed-form least-squares lifting baseline, reported as mean MPJPE.

    Fits one linear map (plus intercept) from flattened normalized 2D
    coordinates to flattened normalized 3D targets; used as a reference
    floor that a trained network must beat.
    """
    def design(x):
        flat = x.reshape(len(x), -1)
        return np.concatenate([flat, np.ones((len(x), 1))], axis=1)

    target = train_y3d_norm.reshape(len(train_y3d_norm), -1)
    coeffs, *_ = np.linalg.lstsq(design(train_x2d_norm), target, rcond=None)
    pred_norm = (design(eval_x2d_norm) @ coeffs).reshape(eval_gt_mm_root_rel.shape)
    pred_mm = denormalize(pred_norm, stats)
    return float(
        np.mean([mpjpe(pred_mm[i], eval_gt_mm_root_rel[i], root) for i in range(len(pred_mm))])
    )


def train(
    model_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    dataset: Dataset,
    checkpoint_cb=None,
    log_cb=None,
) -> TrainResult:
    """Run the full loop: split, normalize, optimize, track the best epoch.

    ``checkpoint_cb(epoch, params, state)`` fires every
    ``checkpoint_every`` epochs when set; ``log_cb(row)`` fires once per
    epoch with the freshly appended :class:`HistoryRow`.
    """
    root = dataset.skeleton.root_joint
    train_idx, eval_idx = split_indices(len(dataset), train_cfg.eval_fraction, train_cfg.seed)
    train_raw = dataset.subset(train_idx)
    eval_raw = dataset.subset(eval_idx)
    train_norm, stats = normalize(train_raw)
    eval_norm, _ = normalize(eval_raw, stats)
    eval_gt_mm = eval_raw.y3d - eval_raw.y3d[:, root : root + 1, :]

    ops = build_operators(dataset.skeleton, model_cfg.effective_hops)
    params = params_init(model_cfg, train_cfg.seed)
    state = init_train_state(params, train_cfg)

    init_mpjpe, init_pa = evaluate_split(
        model_cfg, ops, params, eval_norm.x2d, eval_gt_mm, stats, root
    )
    history = TrainHistory(initial_mpjpe=init_mpjpe, initial_pa_mpjpe=init_pa)
    state.best_eval = init_mpjpe
    best_params = params.copy()
    best_epoch = 0

    shuffle_rng = np.random.default_rng([int(train_cfg.seed), 1])
    n_train = len(train_norm)
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            xb = train_norm.x2d[batch]
            yb = train_norm.y3d[batch]
            pred, cache = network_forward(model_cfg, ops, params, xb, mode="train")
            loss, grad = mse_loss(pred, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(state.step, state.current_lr, loss)
            grads = network_backward(cache, grad)
            adam_step(state, params, grads, train_cfg)
            total += loss * len(batch)
        train_loss = total / n_train
        eval_mpjpe, eval_pa = evaluate_split(
            model_cfg, ops, params, eval_norm.x2d, eval_gt_mm, stats, root
        )
        row = HistoryRow(epoch, train_loss, eval_mpjpe, eval_pa, state.current_lr)
        history.rows.append(row)
        if log_cb is not None:
            log_cb(row)
        if eval_mpjpe < state.best_eval:
            state.best_eval = eval_mpjpe
            best_params = params.copy()
            best_epoch = epoch
        if (
            checkpoint_cb is not None
            and train_cfg.checkpoint_every > 0
            and epoch % train_cfg.checkpoint_every == 0
        ):
            checkpoint_cb(epoch, params, state)
    return TrainResult(
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        history=history,
        stats=stats,
        state=state,
        train_indices=train_idx,
        eval_indices=eval_idx,
    )
