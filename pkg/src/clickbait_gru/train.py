"""MSE loss, backpropagation through time, RMSprop, and the training loop.

Gradients are derived by reverse accumulation through the GRU recurrence and
checked against central finite differences (`grad_check`). The loop trains in
single precision; gradient checking runs the same code in double precision.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import NumericError
from .ingest import LabeledDataset
from .nn import (
    DropoutMasks,
    ForwardCache,
    GruParams,
    Model,
    copy_model,
    forward_batch,
    init_model,
    make_dropout_masks,
    parameter_arrays,
    predict_batch,
)
from .rng import named_rng
from .text import PAD_ID, EmbeddingTable, TokenSequence, Vocabulary, encode, tokenize

CLIP_LIMIT = 5.0
TEXT_FIELDS = ("postText", "targetDescription", "targetTitle")


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    epochs: int = 20
    dropout_embed: float = 0.2
    dropout_gru_in: float = 0.2
    dropout_gru_out: float = 0.5
    d: int = 100
    h: int = 128
    max_len: int = 32
    seed: int = 0
    text_field: str = "postText"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("dropout_embed", "dropout_gru_in", "dropout_gru_out"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.text_field not in TEXT_FIELDS:
            raise ValueError(
                f"text_field must be one of {TEXT_FIELDS}, got {self.text_field!r}"
            )


@dataclass
class RmsPropState:
    """Squared-gradient accumulators, one per parameter array, lazily zeroed."""

    acc: dict[str, np.ndarray] = field(default_factory=dict)


GradientSet = dict[str, np.ndarray]


def mse_loss(preds, targets) -> float:
    """Mean squared error; exactly-rounded sum, so example order never matters."""
    preds = list(preds)
    targets = list(targets)
    if not preds or len(preds) != len(targets):
        raise ValueError(
            f"need equal, nonzero lengths, got {len(preds)} and {len(targets)}"
        )
    return math.fsum((p - t) ** 2 for p, t in zip(preds, targets)) / len(preds)


def _stack_batch(batch, pad_to: int | None = None):
    """Pad sequences to a common width and return (ids, lengths, targets)."""
    width = max(len(seq.ids) for seq, _ in batch)
    if pad_to is not None:
        width = max(width, pad_to)
    ids = np.full((len(batch), width), PAD_ID, dtype=np.int32)
    lengths = np.empty(len(batch), dtype=np.int64)
    targets = np.empty(len(batch), dtype=np.float64)
    for i, (seq, target) in enumerate(batch):
        n = len(seq.ids)
        ids[i, :n] = seq.ids
        lengths[i] = min(seq.length, width)
        targets[i] = target
    return ids, lengths, targets


def _gru_backward(p: GruParams, X, step_mask, steps, dh, grads: GradientSet, prefix: str):
    """Reverse accumulation through one direction; adds into `grads`, returns dX.

    `steps` is in processing order, so walking it backwards visits timesteps in
    the reverse of how the forward pass consumed them for either direction.
    Rows whose step was masked (t >= length) pass dh through untouched.
    """
    dX = np.zeros_like(X)
    for t, h_prev, r, z, c, uh in reversed(steps):
        m = step_mask[:, t][:, None]
        dh_step = np.where(m, dh, 0.0)
        dh_skip = np.where(m, 0.0, dh)
        x_t = X[:, t, :]
        # h = (1 - z) * h_prev + z * c
        dz = dh_step * (c - h_prev)
        dc = dh_step * z
        dh_prev = dh_step * (1.0 - z)
        # c = tanh(W_h x + r * uh + b_h), uh = U_h h_prev
        da_c = dc * (1.0 - c * c)
        dr = da_c * uh
        duh = da_c * r
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        grads[f"{prefix}.W_h"] += da_c.T @ x_t
        grads[f"{prefix}.U_h"] += duh.T @ h_prev
        grads[f"{prefix}.b_h"] += da_c.sum(axis=0)
        grads[f"{prefix}.W_r"] += da_r.T @ x_t
        grads[f"{prefix}.U_r"] += da_r.T @ h_prev
        grads[f"{prefix}.b_r"] += da_r.sum(axis=0)
        grads[f"{prefix}.W_z"] += da_z.T @ x_t
        grads[f"{prefix}.U_z"] += da_z.T @ h_prev
        grads[f"{prefix}.b_z"] += da_z.sum(axis=0)
        dh_prev += duh @ p.U_h + da_r @ p.U_r + da_z @ p.U_z
        dX[:, t, :] = da_c @ p.W_h + da_r @ p.W_r + da_z @ p.W_z
        dh = dh_prev + dh_skip
    return dX


def backprop(
    m: Model,
    batch: list[tuple[TokenSequence, float]],
    masks: DropoutMasks | None = None,
    clip: float | None = CLIP_LIMIT,
) -> tuple[float, GradientSet]:
    """Batch MSE and its exact gradient for every parameter array.

    Gradients are accumulated over the batch, then clipped elementwise to
    [-clip, clip] (pass clip=None to disable, e.g. for finite-difference
    comparison).
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    ids, lengths, targets = _stack_batch(batch)
    preds, cache = forward_batch(m, ids, lengths, masks=masks, want_cache=True)
    loss = mse_loss(preds, targets)

    params = parameter_arrays(m)
    grads: GradientSet = {name: np.zeros_like(arr) for name, arr in params.items()}
    h = m.h
    B = len(batch)

    dp = (2.0 / B) * (preds - targets.astype(preds.dtype))
    da = dp * preds * (1.0 - preds)
    grads["head.w"] += da @ cache.u_drop
    grads["head.b"] += da.sum(keepdims=True)
    du = np.outer(da, m.head.w)
    if masks is not None and masks.out is not None:
        du = du * masks.out
    dX = _gru_backward(m.fwd, cache.X, cache.step_mask, cache.fwd_steps, du[:, :h], grads, "fwd")
    dX += _gru_backward(m.bwd, cache.X, cache.step_mask, cache.bwd_steps, du[:, h:], grads, "bwd")

    if m.embedding.trainable:
        if masks is not None and masks.gru_in is not None:
            dX = dX * masks.gru_in
        if masks is not None and masks.embed is not None:
            dX = dX * masks.embed
        np.add.at(grads["embedding"], ids, dX)

    if clip is not None:
        for g in grads.values():
            np.clip(g, -clip, clip, out=g)

    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss: {_first_nonfinite(params, grads)}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return loss, grads


def _first_nonfinite(params: GradientSet, grads: GradientSet) -> str:
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            return f"parameter {name} contains non-finite values"
    for name, arr in grads.items():
        if not np.all(np.isfinite(arr)):
            return f"gradient for {name} contains non-finite values"
    return "parameters and gradients are finite (loss overflow)"


def rmsprop_update(
    params: dict[str, np.ndarray],
    grads: GradientSet,
    state: RmsPropState,
    cfg: TrainConfig,
) -> None:
    """In-place RMSprop step: acc <- rho*acc + (1-rho)*g^2, p <- p - lr*g/(sqrt(acc)+eps)."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        acc = state.acc.get(name)
        if acc is None:
            acc = state.acc[name] = np.zeros_like(p)
        acc *= cfg.rho
        acc += (1.0 - cfg.rho) * g * g
        p -= cfg.learning_rate * g / (np.sqrt(acc) + cfg.epsilon)


def encode_dataset(
    ds: LabeledDataset, vocab: Vocabulary, max_len: int, text_field: str = "postText"
) -> list[tuple[TokenSequence, float]]:
    """(sequence, judgment-mean target) pairs in dataset order."""
    pairs = []
    for record, judgment in ds:
        tokens = tokenize(record.field_text(text_field))
        pairs.append((encode(tokens, vocab, max_len), judgment.mean))
    return pairs


def _dataset_mse(m: Model, pairs) -> float:
    preds = predict_batch(m, [seq for seq, _ in pairs])
    return mse_loss(preds, [t for _, t in pairs])


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    valid_mse: float


def fit(
    train: LabeledDataset,
    valid: LabeledDataset,
    cfg: TrainConfig,
    vocab: Vocabulary,
    embeddings: EmbeddingTable,
) -> tuple[Model, list[EpochStats]]:
    """Mini-batch training; returns the model from the best-validation epoch.

    Epoch 0 in the history is the untrained model, so the checkpointing rule
    (return the minimum-validation-MSE state) can never hand back something
    worse than the initialization.
    """
    if len(train) == 0 or len(valid) == 0:
        raise ValueError("train and valid datasets must be non-empty")
    if embeddings.d != cfg.d:
        raise ValueError(f"embedding dim {embeddings.d} != configured d {cfg.d}")

    train_pairs = encode_dataset(train, vocab, cfg.max_len, cfg.text_field)
    valid_pairs = encode_dataset(valid, vocab, cfg.max_len, cfg.text_field)

    # train on a private copy: updates must never leak into the caller's table
    model = init_model(
        EmbeddingTable(matrix=embeddings.matrix.copy(), trainable=embeddings.trainable),
        cfg.h,
        cfg.seed,
        dropout_embed=cfg.dropout_embed,
        dropout_gru_in=cfg.dropout_gru_in,
        dropout_gru_out=cfg.dropout_gru_out,
    )
    shuffle_rng = named_rng(cfg.seed, "shuffle")
    dropout_rng = named_rng(cfg.seed, "dropout")
    opt_state = RmsPropState()

    def checkpoint_row(epoch: int) -> EpochStats:
        row = EpochStats(epoch, _dataset_mse(model, train_pairs), _dataset_mse(model, valid_pairs))
        if not math.isfinite(row.valid_mse):
            raise NumericError(f"validation MSE non-finite at epoch {epoch}: {row.valid_mse}")
        return row

    history = [checkpoint_row(0)]
    best = copy_model(model)
    best_valid = history[0].valid_mse

    n = len(train_pairs)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [train_pairs[i] for i in order[start : start + cfg.batch_size]]
            masks = make_dropout_masks(model, len(batch), cfg.max_len, dropout_rng)
            _, grads = backprop(model, batch, masks=masks)
            rmsprop_update(parameter_arrays(model), grads, opt_state, cfg)
        row = checkpoint_row(epoch)
        history.append(row)
        if row.valid_mse < best_valid:
            best_valid = row.valid_mse
            best = copy_model(model)
    return best, history


def write_history(history: list[EpochStats], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["epoch", "train_mse", "valid_mse"])
    for row in history:
        writer.writerow([row.epoch, repr(row.train_mse), repr(row.valid_mse)])


# --- gradient verification -----------------------------------------------------


@dataclass
class GradCheckReport:
    per_array: dict[str, float]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max(self.per_array.values())

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    m: Model,
    batch: list[tuple[TokenSequence, float]],
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients to central differences, element by element.

    Requires a double-precision model with dropout disabled; clipping is off so
    both sides see the raw derivative. Relative error per element is
    |a - n| / max(|a|, |n|, 1e-6); the floor must sit well above the
    cancellation noise of the difference quotient (about 1e-11 for unit-scale
    losses at this step), or near-zero derivatives fail on noise alone.
    """
    if m.dtype != np.float64:
        raise ValueError("grad_check needs a float64 model")
    if m.dropout_embed or m.dropout_gru_in or m.dropout_gru_out:
        raise ValueError("grad_check needs dropout disabled")
    ids, lengths, targets = _stack_batch(batch)

    def batch_loss() -> float:
        preds, _ = forward_batch(m, ids, lengths)
        return mse_loss(preds, targets)

    _, analytic = backprop(m, batch, clip=None)
    per_array: dict[str, float] = {}
    for name, arr in parameter_arrays(m).items():
        worst = 0.0
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = batch_loss()
            flat[i] = saved - step
            minus = batch_loss()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * step)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, rel)
        per_array[name] = worst
    return GradCheckReport(per_array=per_array, tolerance=tolerance)
