"""Autoregressive generation: temperature scaling, nucleus truncation, and
an incremental (KV-cached) decoder so sampling a long passage does not
re-run the full sequence every step.

Order of operations per step is fixed: divide logits by temperature, take
the softmax, truncate to the smallest top-probability prefix whose mass
reaches top_p (ties at the boundary all kept), renormalize, then draw.
Randomness comes from a Philox counter-based generator keyed on
``rng_seed``; a fixed seed reproduces the exact token stream within this
implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .model import ModelConfig, causal_mask


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    top_p: float = 0.9
    temperature: float = 1.2
    max_new_tokens: int = 512
    stop_ids: frozenset[int] = field(default_factory=frozenset)
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.top_p <= 1.0):
            raise SamplerError("top_p must be in (0, 1]")
        if self.temperature <= 0.0:
            raise SamplerError("temperature must be positive")
        if self.max_new_tokens < 1:
            raise SamplerError("max_new_tokens must be >= 1")


def apply_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0.0:
        raise SamplerError("temperature must be positive")
    return np.asarray(logits) / temperature


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def nucleus_filter(probs: np.ndarray, p: float) -> np.ndarray:
    """Zero everything outside the smallest high-probability prefix with
    cumulative mass >= p, then renormalize. Boundary ties are all kept."""
    probs = np.asarray(probs, dtype=np.float64)
    if not (0.0 < p <= 1.0):
        raise SamplerError("p must be in (0, 1]")
    if probs.ndim != 1 or probs.size == 0 or (probs < 0).any():
        raise SamplerError("probs must be a 1-D distribution")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise SamplerError("probs must sum to 1")
    if p == 1.0:
        return probs.copy()
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    cut = int(np.searchsorted(csum, p, side="left"))
    cut = min(cut, probs.size - 1)
    boundary = probs[order[cut]]
    kept = np.where(probs >= boundary, probs, 0.0)
    return kept / kept.sum()


def sample_next(logits: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator) -> tuple[int, float]:
    """One sampling step; returns (token id, log-prob under the truncated law)."""
    probs = softmax(apply_temperature(logits, cfg.temperature))
    probs = nucleus_filter(probs, cfg.top_p)
    r = rng.random()
    csum = np.cumsum(probs)
    token = int(np.searchsorted(csum, r, side="right"))
    if token >= probs.size or probs[token] == 0.0:
        token = int(np.flatnonzero(probs)[-1])
    return token, math.log(probs[token])


# -- incremental eval-mode decoder --------------------------------------


class DecoderState:
    """Per-layer key/value cache for a single sequence."""

    def __init__(self, params: dict[str, np.ndarray], config: ModelConfig):
        self.params = params
        self.config = config
        self.keys: list[np.ndarray] = [np.zeros((config.n_heads, 0, config.hidden // config.n_heads), dtype=np.float64) for _ in range(config.n_layers)]
        self.values: list[np.ndarray] = [k.copy() for k in self.keys]
        self.length = 0

    @property
    def remaining(self) -> int:
        return self.config.context_len - self.length


def _ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def _block_step(state: DecoderState, x: np.ndarray, layer: int, grow_cache: bool) -> np.ndarray:
    """Run one transformer block over t new positions given the cache."""
    p, cfg = state.params, state.config
    nh = cfg.n_heads
    hd = cfg.hidden // nh
    t = x.shape[0]
    a = _ln(x, p[f"layer{layer}.ln1.g"], p[f"layer{layer}.ln1.b"])
    qkv = a @ p[f"layer{layer}.attn.wqkv"] + p[f"layer{layer}.attn.bqkv"]
    q, k, v = np.split(qkv, 3, axis=-1)
    q = q.reshape(t, nh, hd).transpose(1, 0, 2)
    k = k.reshape(t, nh, hd).transpose(1, 0, 2)
    v = v.reshape(t, nh, hd).transpose(1, 0, 2)
    k_all = np.concatenate([state.keys[layer], k], axis=1)
    v_all = np.concatenate([state.values[layer], v], axis=1)
    if grow_cache:
        state.keys[layer] = k_all
        state.values[layer] = v_all
    past = k_all.shape[1] - t
    scores = q @ k_all.transpose(0, 2, 1) / math.sqrt(hd)
    if t > 1:
        mask = np.concatenate(
            [np.zeros((t, past), dtype=bool), causal_mask(t)], axis=1
        )
        scores = np.where(mask[None, :, :], -1e9, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w = w / w.sum(axis=-1, keepdims=True)
    y = (w @ v_all).transpose(1, 0, 2).reshape(t, cfg.hidden)
    y = y @ p[f"layer{layer}.attn.wo"] + p[f"layer{layer}.attn.bo"]
    x = x + y
    a2 = _ln(x, p[f"layer{layer}.ln2.g"], p[f"layer{layer}.ln2.b"])
    m = _gelu(a2 @ p[f"layer{layer}.mlp.w1"] + p[f"layer{layer}.mlp.b1"])
    x = x + (m @ p[f"layer{layer}.mlp.w2"] + p[f"layer{layer}.mlp.b2"])
    return x


def decode_embedded(state: DecoderState, emb: np.ndarray) -> np.ndarray:
    """Feed t new embedded positions through the decoder; returns last-position logits."""
    p, cfg = state.params, state.config
    t = emb.shape[0]
    if state.length + t > cfg.context_len:
        raise SamplerError("decoder state would exceed the model context")
    positions = np.arange(state.length, state.length + t)
    x = emb.astype(np.float64) + p["pos_emb"][positions]
    for layer in range(cfg.n_layers):
        x = _block_step(state, x, layer, grow_cache=True)
    state.length += t
    x = _ln(x[-1:], p["final_ln.g"], p["final_ln.b"])
    return (x @ p["tok_emb"].T)[0]


def decode_tokens(state: DecoderState, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= state.config.vocab_size):
        raise SamplerError("token id out of range")
    return decode_embedded(state, state.params["tok_emb"][ids])


@dataclass
class GenerateResult:
    prompt_ids: list[int]
    new_ids: list[int]
    logprobs: list[float]
    hit_context_limit: bool = False

    @property
    def full_ids(self) -> list[int]:
        return self.prompt_ids + self.new_ids

    @property
    def total_logprob(self) -> float:
        return float(sum(self.logprobs))


def generate(ckpt: Checkpoint, prompt_ids, cfg: SamplerConfig) -> GenerateResult:
    """Sample up to max_new_tokens continuations of the prompt.

    Stops early when a stop id is emitted (the stop token is included) or
    when the model context fills up.
    """
    prompt_ids = [int(i) for i in np.asarray(prompt_ids).ravel()]
    if not prompt_ids:
        raise SamplerError("prompt must be non-empty")
    if len(prompt_ids) >= ckpt.config.context_len:
        raise SamplerError("prompt length must be below the model context")
    rng = np.random.Generator(np.random.Philox(key=cfg.rng_seed))
    state = DecoderState(ckpt.params, ckpt.config)
    logits = decode_tokens(state, np.asarray(prompt_ids))
    new_ids: list[int] = []
    logprobs: list[float] = []
    hit_limit = False
    for _ in range(cfg.max_new_tokens):
        token, lp = sample_next(logits, cfg, rng)
        new_ids.append(token)
        logprobs.append(lp)
        if token in cfg.stop_ids:
            break
        if state.remaining == 0:
            hit_limit = True
            break
        logits = decode_tokens(state, np.asarray([token]))
    return GenerateResult(prompt_ids=prompt_ids, new_ids=new_ids, logprobs=logprobs, hit_context_limit=hit_limit)


def generate_greedy(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    prefix_emb: np.ndarray,
    *,
    max_new_tokens: int,
    stop_ids: frozenset[int] = frozenset(),
) -> list[int]:
    """Deterministic argmax decoding from a pre-embedded prefix."""
    if prefix_emb.ndim != 2 or prefix_emb.shape[0] == 0:
        raise SamplerError("prefix embeddings must be a non-empty (L, hidden) array")
    state = DecoderState(params, config)
    logits = decode_embedded(state, prefix_emb)
    out: list[int] = []
    for _ in range(max_new_tokens):
        token = int(np.argmax(logits))
        out.append(token)
        if token in stop_ids or state.remaining == 0:
            break
        logits = decode_tokens(state, np.asarray([token]))
    return out
