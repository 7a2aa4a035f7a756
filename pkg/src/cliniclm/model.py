"""Decoder-only transformer language model.

Layout: learned token + position embeddings, pre-norm blocks with causal
self-attention and a 4x GeLU feed-forward, a final layer norm, and an
output projection tied to the token embedding. Initialization draws
weights from N(0, 0.02) (positions N(0, 0.01)), with residual output
projections scaled by 1/sqrt(2 * n_layers); biases start at zero and
norm gains at one. All draws come from a Philox stream keyed on
``init_seed`` so the same config always builds the same model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ConfigError(ValueError):
    """Invalid model configuration."""


class ModelInputError(ValueError):
    """Token ids or shapes that violate the forward contract."""


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    hidden: int
    n_heads: int
    vocab_size: int
    context_len: int
    dropout: float = 0.1
    init_seed: int = 0

    def __post_init__(self):
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.hidden < 1 or self.n_heads < 1:
            raise ConfigError("hidden and n_heads must be positive")
        if self.hidden % self.n_heads != 0:
            raise ConfigError(f"hidden {self.hidden} not divisible by n_heads {self.n_heads}")
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.context_len < 1:
            raise ConfigError("context_len must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "hidden": self.hidden,
            "n_heads": self.n_heads,
            "vocab_size": self.vocab_size,
            "context_len": self.context_len,
            "dropout": self.dropout,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# Reference shapes for the 5B / 20B parameter-count targets.
PRESETS = {
    "5b": ModelConfig(n_layers=24, hidden=4096, n_heads=32, vocab_size=50257, context_len=2048),
    "20b": ModelConfig(n_layers=44, hidden=6144, n_heads=48, vocab_size=50257, context_len=2048),
}


def param_count(config: ModelConfig) -> int:
    """Exact parameter total for this layout (embeddings tied to the head)."""
    h = config.hidden
    per_layer = 12 * h * h + 13 * h
    return (
        config.vocab_size * h
        + config.context_len * h
        + config.n_layers * per_layer
        + 2 * h  # final norm gain + bias
    )


def _param_specs(config: ModelConfig):
    h = config.hidden
    yield "tok_emb", (config.vocab_size, h), "embed"
    yield "pos_emb", (config.context_len, h), "pos"
    for i in range(config.n_layers):
        yield f"layer{i}.ln1.g", (h,), "ones"
        yield f"layer{i}.ln1.b", (h,), "zeros"
        yield f"layer{i}.attn.wqkv", (h, 3 * h), "weight"
        yield f"layer{i}.attn.bqkv", (3 * h,), "zeros"
        yield f"layer{i}.attn.wo", (h, h), "resid_weight"
        yield f"layer{i}.attn.bo", (h,), "zeros"
        yield f"layer{i}.ln2.g", (h,), "ones"
        yield f"layer{i}.ln2.b", (h,), "zeros"
        yield f"layer{i}.mlp.w1", (h, 4 * h), "weight"
        yield f"layer{i}.mlp.b1", (4 * h,), "zeros"
        yield f"layer{i}.mlp.w2", (4 * h, h), "resid_weight"
        yield f"layer{i}.mlp.b2", (h,), "zeros"
    yield "final_ln.g", (h,), "ones"
    yield "final_ln.b", (h,), "zeros"


def init_params(config: ModelConfig, dtype: str = "fp32") -> dict[str, np.ndarray]:
    np_dtype = T.DTYPES[dtype]
    rng = np.random.Generator(np.random.Philox(key=config.init_seed))
    resid_scale = 1.0 / math.sqrt(2 * config.n_layers) if config.n_layers else 1.0
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in _param_specs(config):
        if kind == "zeros":
            arr = np.zeros(shape)
        elif kind == "ones":
            arr = np.ones(shape)
        elif kind == "pos":
            arr = rng.normal(0.0, 0.01, size=shape)
        elif kind == "resid_weight":
            arr = rng.normal(0.0, 0.02, size=shape) * resid_scale
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        params[name] = arr.astype(np_dtype)
    return params


def wrap_params(params: dict[str, np.ndarray], requires_grad: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def _validate_tokens(config: ModelConfig, tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    if tokens.ndim != 2:
        raise ModelInputError("tokens must be (batch, length)")
    if tokens.shape[1] > config.context_len:
        raise ModelInputError(f"sequence length {tokens.shape[1]} exceeds context {config.context_len}")
    if tokens.shape[1] < 1:
        raise ModelInputError("empty sequence")
    if tokens.min() < 0 or tokens.max() >= config.vocab_size:
        raise ModelInputError("token id out of range")
    return tokens


def causal_mask(length: int) -> np.ndarray:
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def forward_graph(
    params_t: dict[str, Tensor],
    config: ModelConfig,
    tokens: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Causal forward pass over token ids; returns (B, L, V) logits."""
    tokens = _validate_tokens(config, tokens)
    _, length = tokens.shape
    tok = T.embedding(params_t["tok_emb"], tokens)
    pos = T.embedding(params_t["pos_emb"], np.arange(length))
    return _run_blocks(params_t, config, T.add(tok, pos), mode, rng)


def forward_embedded(
    params_t: dict[str, Tensor],
    config: ModelConfig,
    emb: Tensor,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    positions: np.ndarray | None = None,
) -> Tensor:
    """Forward pass from a pre-assembled (B, L, hidden) embedding sequence.

    Positions default to 0..L-1, continuous across whatever segments the
    caller concatenated.
    """
    length = emb.shape[-2]
    if length > config.context_len:
        raise ModelInputError(f"sequence length {length} exceeds context {config.context_len}")
    if positions is None:
        positions = np.arange(length)
    pos = T.embedding(params_t["pos_emb"], positions)
    return _run_blocks(params_t, config, T.add(emb, pos), mode, rng)


def _run_blocks(params_t, config: ModelConfig, x: Tensor, mode: str, rng) -> Tensor:
    if mode not in ("train", "eval"):
        raise ModelInputError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and config.dropout > 0.0 and rng is None:
        raise ModelInputError("train mode with dropout needs an rng")
    drop = config.dropout if train else 0.0

    if x.data.ndim == 2:
        x = T.reshape(x, (1,) + x.shape)
    length = x.shape[1]
    mask = causal_mask(length)[None, None, :, :]

    if drop > 0.0:
        x = T.dropout(x, drop, rng)
    for i in range(config.n_layers):
        x = T.add(x, _attention(params_t, config, x, i, mask, drop, rng))
        x = T.add(x, _mlp(params_t, x, i, drop, rng))
    x = T.layer_norm(x, params_t["final_ln.g"], params_t["final_ln.b"])
    b, length, h = x.shape
    flat = T.reshape(x, (b * length, h))
    logits = T.matmul(flat, T.transpose(params_t["tok_emb"], (1, 0)))
    return T.reshape(logits, (b, length, config.vocab_size))


def _attention(params_t, config: ModelConfig, x: Tensor, i: int, mask, drop: float, rng) -> Tensor:
    b, length, h = x.shape
    nh = config.n_heads
    hd = h // nh
    a = T.layer_norm(x, params_t[f"layer{i}.ln1.g"], params_t[f"layer{i}.ln1.b"])
    qkv = T.add(T.matmul(T.reshape(a, (b * length, h)), params_t[f"layer{i}.attn.wqkv"]), params_t[f"layer{i}.attn.bqkv"])
    q = T.slice_axis(qkv, 1, 0, h)
    k = T.slice_axis(qkv, 1, h, 2 * h)
    v = T.slice_axis(qkv, 1, 2 * h, 3 * h)
    # (B*L, h) -> (B, nh, L, hd)
    q = T.transpose(T.reshape(q, (b, length, nh, hd)), (0, 2, 1, 3))
    k = T.transpose(T.reshape(k, (b, length, nh, hd)), (0, 2, 1, 3))
    v = T.transpose(T.reshape(v, (b, length, nh, hd)), (0, 2, 1, 3))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), Tensor(np.asarray(1.0 / math.sqrt(hd), dtype=x.data.dtype)))
    scores = T.masked_fill(scores, np.broadcast_to(mask, scores.shape), -1e9)
    att = T.softmax(scores, axis=-1)
    if drop > 0.0:
        att = T.dropout(att, drop, rng)
    y = T.matmul(att, v)
    y = T.reshape(T.transpose(y, (0, 2, 1, 3)), (b * length, h))
    y = T.add(T.matmul(y, params_t[f"layer{i}.attn.wo"]), params_t[f"layer{i}.attn.bo"])
    if drop > 0.0:
        y = T.dropout(y, drop, rng)
    return T.reshape(y, (b, length, h))


def _mlp(params_t, x: Tensor, i: int, drop: float, rng) -> Tensor:
    b, length, h = x.shape
    a = T.layer_norm(x, params_t[f"layer{i}.ln2.g"], params_t[f"layer{i}.ln2.b"])
    a = T.reshape(a, (b * length, h))
    hmid = T.gelu(T.add(T.matmul(a, params_t[f"layer{i}.mlp.w1"]), params_t[f"layer{i}.mlp.b1"]))
    out = T.add(T.matmul(hmid, params_t[f"layer{i}.mlp.w2"]), params_t[f"layer{i}.mlp.b2"])
    if drop > 0.0:
        out = T.dropout(out, drop, rng)
    return T.reshape(out, (b, length, h))


def lm_loss(logits: Tensor, tokens: np.ndarray) -> Tensor:
    """Mean next-token cross-entropy; targets are the inputs shifted by one."""
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    b, length = tokens.shape
    if length < 2:
        raise ModelInputError("lm_loss needs sequences of at least 2 tokens")
    if logits.shape[:2] != (b, length):
        raise ModelInputError("logits and tokens disagree on (batch, length)")
    pred = T.slice_axis(logits, 1, 0, length - 1)
    flat = T.reshape(pred, (b * (length - 1), logits.shape[2]))
    targets = tokens[:, 1:].reshape(-1)
    return T.cross_entropy_logits(flat, targets)
