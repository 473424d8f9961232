"""Bidirectional GRU score regressor.

One GRU reads the token sequence left to right, a second reads it right to
left, and the final state of each direction is concatenated and fed to a
single sigmoid unit. All forward code here is shared by inference and by the
manual backward pass in `train`.

Gate algebra per step (elementwise *):

    r = sigmoid(W_r x + U_r h_prev + b_r)
    z = sigmoid(W_z x + U_z h_prev + b_z)
    c = tanh(W_h x + r * (U_h h_prev) + b_h)
    h = (1 - z) * h_prev + z * c

The new state is a convex combination of h_prev and c, so states stay in
[-1, 1] from a zero start.
"""

import json
import struct
from dataclasses import dataclass, replace
from typing import BinaryIO

import numpy as np

from .errors import DataError
from .rng import named_rng
from .text import EmbeddingTable, TokenSequence, Vocabulary

CHECKPOINT_MAGIC = b"CBGRUCKPT1\n"
CHECKPOINT_FORMAT = "cbgru-checkpoint"
CHECKPOINT_VERSION = 1


def sigmoid(x):
    # exp overflow for very negative x saturates to inf, giving the exact limit 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


@dataclass
class GruParams:
    """Weights of one GRU direction: input, recurrent, and bias per gate."""

    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    U_r: np.ndarray
    U_z: np.ndarray
    U_h: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray

    @property
    def h(self) -> int:
        return int(self.W_r.shape[0])

    @property
    def d(self) -> int:
        return int(self.W_r.shape[1])


@dataclass
class DenseSigmoid:
    w: np.ndarray
    b: np.ndarray  # shape (1,)


@dataclass
class Model:
    embedding: EmbeddingTable
    fwd: GruParams
    bwd: GruParams
    head: DenseSigmoid
    dropout_embed: float = 0.0
    dropout_gru_in: float = 0.0
    dropout_gru_out: float = 0.0

    @property
    def d(self) -> int:
        return self.embedding.d

    @property
    def h(self) -> int:
        return self.fwd.h

    @property
    def dtype(self):
        return self.embedding.matrix.dtype


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)


def init_gru_params(d: int, h: int, rng: np.random.Generator, dtype=np.float32) -> GruParams:
    """Input matrices uniform +-sqrt(6/(d+h)), recurrent matrices orthogonal, zero biases."""
    scale = np.sqrt(6.0 / (d + h))

    def w():
        return rng.uniform(-scale, scale, size=(h, d)).astype(dtype)

    def u():
        return _orthogonal(rng, h).astype(dtype)

    return GruParams(
        W_r=w(), W_z=w(), W_h=w(),
        U_r=u(), U_z=u(), U_h=u(),
        b_r=np.zeros(h, dtype=dtype),
        b_z=np.zeros(h, dtype=dtype),
        b_h=np.zeros(h, dtype=dtype),
    )


def init_model(
    embedding: EmbeddingTable,
    h: int,
    seed: int,
    dropout_embed: float = 0.0,
    dropout_gru_in: float = 0.0,
    dropout_gru_out: float = 0.0,
) -> Model:
    for rate in (dropout_embed, dropout_gru_in, dropout_gru_out):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    dtype = embedding.matrix.dtype
    d = embedding.d
    rng = named_rng(seed, "init")
    fwd = init_gru_params(d, h, rng, dtype)
    bwd = init_gru_params(d, h, rng, dtype)
    head_scale = np.sqrt(6.0 / (2 * h + 1))
    head = DenseSigmoid(
        w=rng.uniform(-head_scale, head_scale, size=2 * h).astype(dtype),
        b=np.zeros(1, dtype=dtype),
    )
    return Model(
        embedding=embedding,
        fwd=fwd,
        bwd=bwd,
        head=head,
        dropout_embed=dropout_embed,
        dropout_gru_in=dropout_gru_in,
        dropout_gru_out=dropout_gru_out,
    )


GRU_FIELDS = ("W_r", "W_z", "W_h", "U_r", "U_z", "U_h", "b_r", "b_z", "b_h")


def parameter_arrays(m: Model, include_embedding: bool = True) -> dict[str, np.ndarray]:
    """Learnable arrays by stable name; the optimizer and checkpoints key off these."""
    params: dict[str, np.ndarray] = {}
    if include_embedding and m.embedding.trainable:
        params["embedding"] = m.embedding.matrix
    for prefix, gru in (("fwd", m.fwd), ("bwd", m.bwd)):
        for name in GRU_FIELDS:
            params[f"{prefix}.{name}"] = getattr(gru, name)
    params["head.w"] = m.head.w
    params["head.b"] = m.head.b
    return params


# --- single-sequence forward -------------------------------------------------


def gru_step(p: GruParams, x_t: np.ndarray, h_prev: np.ndarray):
    """One recurrence step; also works on (B, d) / (B, h) batches.

    Returns the new state and the intermediate values the backward pass needs.
    """
    if x_t.shape[-1] != p.d or h_prev.shape[-1] != p.h:
        raise ValueError(
            f"shape mismatch: x {x_t.shape}, h {h_prev.shape} vs d={p.d}, h={p.h}"
        )
    r = sigmoid(x_t @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    z = sigmoid(x_t @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    uh = h_prev @ p.U_h.T
    c = np.tanh(x_t @ p.W_h.T + r * uh + p.b_h)
    h_t = (1.0 - z) * h_prev + z * c
    return h_t, (x_t, h_prev, r, z, c, uh)


def run_direction(p: GruParams, xs: np.ndarray, reverse: bool = False) -> np.ndarray:
    """All states of one direction over a (T, d) sequence, aligned to positions.

    Forward mode returns the state after reading x_1..x_t at position t;
    reverse mode reads x_T..x_t, so position 0 holds the full right-to-left
    summary. A zero-length input yields the single zero initial state.
    """
    xs = np.asarray(xs)
    n = xs.shape[0]
    dtype = p.W_r.dtype
    if n == 0:
        return np.zeros((1, p.h), dtype=dtype)
    states = np.empty((n, p.h), dtype=dtype)
    h = np.zeros(p.h, dtype=dtype)
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        h, _ = gru_step(p, xs[t], h)
        states[t] = h
    return states


def inverted_dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Keep mask scaled by 1/(1-rate) so expectations match inference."""
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def encode_post(
    m: Model,
    seq: TokenSequence,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Summary vector [fwd final state, bwd final state] of length 2h.

    In train mode, inverted dropout is applied to the embedded sequence
    (per-position mask, then one input mask shared across timesteps) and to
    the concatenated summary. Infer mode applies no dropout or rescaling.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("train mode needs an rng for dropout masks")
    dtype = m.dtype
    length = seq.length
    if length == 0:
        u = np.zeros(2 * m.h, dtype=dtype)
    else:
        X = m.embedding.matrix[np.asarray(seq.ids)[:length]]
        if train:
            if m.dropout_embed > 0.0:
                X = X * inverted_dropout_mask(X.shape, m.dropout_embed, rng, dtype)
            if m.dropout_gru_in > 0.0:
                X = X * inverted_dropout_mask((m.d,), m.dropout_gru_in, rng, dtype)
        h_fwd = run_direction(m.fwd, X)[-1]
        h_bwd = run_direction(m.bwd, X, reverse=True)[0]
        u = np.concatenate([h_fwd, h_bwd])
    if train and m.dropout_gru_out > 0.0:
        u = u * inverted_dropout_mask(u.shape, m.dropout_gru_out, rng, dtype)
    return u


def predict(m: Model, seq: TokenSequence) -> float:
    """Clickbait score in (0, 1); deterministic (no dropout)."""
    u = encode_post(m, seq, mode="infer")
    return float(sigmoid(u @ m.head.w + m.head.b[0]))


# --- batched forward ----------------------------------------------------------


@dataclass
class DropoutMasks:
    """Pre-drawn inverted-dropout masks for one batch; any entry may be None."""

    embed: np.ndarray | None = None  # (B, T, d)
    gru_in: np.ndarray | None = None  # (B, 1, d), shared across timesteps
    out: np.ndarray | None = None  # (B, 2h)


def make_dropout_masks(m: Model, batch_size: int, max_len: int, rng: np.random.Generator) -> DropoutMasks:
    dtype = m.dtype
    embed = gru_in = out = None
    if m.dropout_embed > 0.0:
        embed = inverted_dropout_mask((batch_size, max_len, m.d), m.dropout_embed, rng, dtype)
    if m.dropout_gru_in > 0.0:
        gru_in = inverted_dropout_mask((batch_size, 1, m.d), m.dropout_gru_in, rng, dtype)
    if m.dropout_gru_out > 0.0:
        out = inverted_dropout_mask((batch_size, 2 * m.h), m.dropout_gru_out, rng, dtype)
    return DropoutMasks(embed=embed, gru_in=gru_in, out=out)


@dataclass
class ForwardCache:
    """Everything the backward pass reuses from one batched forward run."""

    ids: np.ndarray  # (B, T) int
    step_mask: np.ndarray  # (B, T) bool, True where t < length
    X: np.ndarray  # (B, T, d) embedded inputs after input dropout
    fwd_steps: list
    bwd_steps: list
    u_drop: np.ndarray  # (B, 2h) summary after output dropout
    preds: np.ndarray  # (B,)
    masks: DropoutMasks | None


def _run_gru_batch(p: GruParams, X, step_mask, reverse: bool, want_cache: bool):
    B, T, _ = X.shape
    h = np.zeros((B, p.h), dtype=X.dtype)
    steps = [] if want_cache else None
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        h_prev = h
        h_new, (_, _, r, z, c, uh) = gru_step(p, X[:, t, :], h_prev)
        h = np.where(step_mask[:, t][:, None], h_new, h_prev)
        if want_cache:
            steps.append((t, h_prev, r, z, c, uh))
    return h, steps


def forward_batch(
    m: Model,
    ids: np.ndarray,
    lengths: np.ndarray,
    masks: DropoutMasks | None = None,
    want_cache: bool = False,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Predictions for a (B, T) id batch; PAD steps beyond each length are skipped.

    Equivalent to `predict` per row when `masks` is None.
    """
    ids = np.asarray(ids)
    lengths = np.asarray(lengths)
    B, T = ids.shape
    step_mask = np.arange(T)[None, :] < lengths[:, None]
    X = m.embedding.matrix[ids]
    if masks is not None and masks.embed is not None:
        X = X * masks.embed
    if masks is not None and masks.gru_in is not None:
        X = X * masks.gru_in
    h_fwd, fwd_steps = _run_gru_batch(m.fwd, X, step_mask, False, want_cache)
    h_bwd, bwd_steps = _run_gru_batch(m.bwd, X, step_mask, True, want_cache)
    u = np.concatenate([h_fwd, h_bwd], axis=1)
    if masks is not None and masks.out is not None:
        u = u * masks.out
    preds = sigmoid(u @ m.head.w + m.head.b[0])
    if not want_cache:
        return preds, None
    return preds, ForwardCache(
        ids=ids,
        step_mask=step_mask,
        X=X,
        fwd_steps=fwd_steps,
        bwd_steps=bwd_steps,
        u_drop=u,
        preds=preds,
        masks=masks,
    )


def predict_batch(m: Model, seqs: list[TokenSequence], chunk: int = 512) -> np.ndarray:
    """Scores for many sequences, in input order."""
    out = np.empty(len(seqs), dtype=np.float64)
    for start in range(0, len(seqs), chunk):
        part = seqs[start : start + chunk]
        ids = np.stack([s.ids for s in part])
        lengths = np.array([s.length for s in part])
        preds, _ = forward_batch(m, ids, lengths)
        out[start : start + len(part)] = preds
    return out


# --- checkpointing ------------------------------------------------------------


def _array_manifest(m: Model) -> dict[str, np.ndarray]:
    arrays = {"embedding": m.embedding.matrix}
    for prefix, gru in (("fwd", m.fwd), ("bwd", m.bwd)):
        for name in GRU_FIELDS:
            arrays[f"{prefix}.{name}"] = getattr(gru, name)
    arrays["head.w"] = m.head.w
    arrays["head.b"] = m.head.b
    return arrays


def save_model(
    m: Model,
    vocab: Vocabulary,
    out: BinaryIO,
    max_len: int,
    text_field: str = "postText",
) -> None:
    """Write a self-describing binary checkpoint with deterministic bytes."""
    arrays = _array_manifest(m)
    manifest = [
        {
            "name": name,
            "dtype": arr.dtype.newbyteorder("<").str,
            "shape": list(arr.shape),
        }
        for name, arr in arrays.items()
    ]
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d": m.d,
        "h": m.h,
        "max_len": max_len,
        "text_field": text_field,
        "dropout_embed": m.dropout_embed,
        "dropout_gru_in": m.dropout_gru_in,
        "dropout_gru_out": m.dropout_gru_out,
        "trainable_embedding": m.embedding.trainable,
        "vocab_tokens": vocab.id_to_token[2:],
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<Q", len(blob)))
    out.write(blob)
    for arr in arrays.values():
        out.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_model(inp: BinaryIO) -> tuple[Model, Vocabulary, dict]:
    """Read a checkpoint; bit-exact inverse of save_model."""
    magic = inp.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise DataError("not a model checkpoint (bad magic bytes)")
    (header_len,) = struct.unpack("<Q", inp.read(8))
    header = json.loads(inp.read(header_len).decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"unsupported checkpoint format/version: "
            f"{header.get('format')!r} v{header.get('version')!r}"
        )
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        data = inp.read(count * dtype.itemsize)
        if len(data) != count * dtype.itemsize:
            raise DataError(f"checkpoint truncated while reading {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()

    vocab = Vocabulary.from_tokens(header["vocab_tokens"])
    embedding = EmbeddingTable(
        matrix=arrays["embedding"], trainable=header["trainable_embedding"]
    )

    def gru(prefix: str) -> GruParams:
        return GruParams(**{name: arrays[f"{prefix}.{name}"] for name in GRU_FIELDS})

    model = Model(
        embedding=embedding,
        fwd=gru("fwd"),
        bwd=gru("bwd"),
        head=DenseSigmoid(w=arrays["head.w"], b=arrays["head.b"]),
        dropout_embed=header["dropout_embed"],
        dropout_gru_in=header["dropout_gru_in"],
        dropout_gru_out=header["dropout_gru_out"],
    )
    meta = {
        "d": header["d"],
        "h": header["h"],
        "max_len": header["max_len"],
        "text_field": header["text_field"],
    }
    return model, vocab, meta


def copy_model(m: Model) -> Model:
    """Deep copy of all parameter arrays (used for best-epoch snapshots)."""
    return Model(
        embedding=EmbeddingTable(
            matrix=m.embedding.matrix.copy(), trainable=m.embedding.trainable
        ),
        fwd=replace(m.fwd, **{f: getattr(m.fwd, f).copy() for f in GRU_FIELDS}),
        bwd=replace(m.bwd, **{f: getattr(m.bwd, f).copy() for f in GRU_FIELDS}),
        head=DenseSigmoid(w=m.head.w.copy(), b=m.head.b.copy()),
        dropout_embed=m.dropout_embed,
        dropout_gru_in=m.dropout_gru_in,
        dropout_gru_out=m.dropout_gru_out,
    )
