"""Soft-prompt (fixed-LM) tuning.

A small encoder turns trainable seed vectors into ``n_virtual`` continuous
prompt embeddings that are prepended to the task input as
[virtual tokens; x; y]. Only the prompt parameters train; the base
checkpoint is byte-frozen and its digest must not move. The loss covers
target-segment positions only, and inference decodes greedily so task
evaluation is deterministic.

Encoders: "recurrent" (single-layer LSTM over the seeds, hidden width
equal to the model width, plus a linear head) for relation-style tasks,
"feedforward" (two-layer tanh MLP) for QA-style tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, content_hash
from .model import ModelConfig, ModelInputError, forward_embedded, wrap_params
from .optim import LrSchedule, adam_step, init_adam, lr_at
from .sampling import generate_greedy
from .tensor import Tensor


class PtuneError(ValueError):
    pass


@dataclass(frozen=True)
class SoftPromptConfig:
    n_virtual: int = 15
    encoder_kind: str = "recurrent"  # or "feedforward"
    encoder_hidden: int = 2048
    task_name: str = "task"

    def __post_init__(self):
        if self.n_virtual < 1:
            raise PtuneError("n_virtual must be >= 1")
        if self.encoder_kind not in ("recurrent", "feedforward"):
            raise PtuneError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.encoder_hidden < 1:
            raise PtuneError("encoder_hidden must be >= 1")


@dataclass
class PromptWeights:
    spc: SoftPromptConfig
    params: dict[str, np.ndarray]
    step: int = 0

    def copy(self) -> "PromptWeights":
        return PromptWeights(spc=self.spc, params={k: v.copy() for k, v in self.params.items()}, step=self.step)


def init_prompt(spc: SoftPromptConfig, config: ModelConfig, seed: int = 0) -> PromptWeights:
    h = config.hidden
    rng = np.random.Generator(np.random.Philox(key=seed))
    params: dict[str, np.ndarray] = {"seed_emb": rng.normal(0.0, 0.02, size=(spc.n_virtual, h))}
    if spc.encoder_kind == "feedforward":
        params["mlp.w1"] = rng.normal(0.0, 0.02, size=(h, spc.encoder_hidden))
        params["mlp.b1"] = np.zeros(spc.encoder_hidden)
        params["mlp.w2"] = rng.normal(0.0, 0.02, size=(spc.encoder_hidden, h))
        params["mlp.b2"] = np.zeros(h)
    else:
        params["lstm.wx"] = rng.normal(0.0, 0.02, size=(h, 4 * h))
        params["lstm.wh"] = rng.normal(0.0, 0.02, size=(h, 4 * h))
        params["lstm.b"] = np.zeros(4 * h)
        params["head.w"] = rng.normal(0.0, 0.02, size=(h, h))
        params["head.b"] = np.zeros(h)
    params = {k: v.astype(np.float32) for k, v in params.items()}
    return PromptWeights(spc=spc, params=params, step=0)


def prompt_graph(weights_t: dict[str, Tensor], spc: SoftPromptConfig, config: ModelConfig) -> Tensor:
    """(n_virtual, hidden) prompt embeddings as an autograd graph."""
    seeds = weights_t["seed_emb"]
    if spc.encoder_kind == "feedforward":
        hid = T.tanh(T.add(T.matmul(seeds, weights_t["mlp.w1"]), weights_t["mlp.b1"]))
        return T.add(T.matmul(hid, weights_t["mlp.w2"]), weights_t["mlp.b2"])
    h = config.hidden
    wx, wh, b = weights_t["lstm.wx"], weights_t["lstm.wh"], weights_t["lstm.b"]
    hidden = Tensor(np.zeros((1, h), dtype=np.float32))
    cell = Tensor(np.zeros((1, h), dtype=np.float32))
    outputs: list[Tensor] = []
    for t in range(spc.n_virtual):
        x_t = T.slice_axis(seeds, 0, t, t + 1)
        gates = T.add(T.add(T.matmul(x_t, wx), T.matmul(hidden, wh)), b)
        i_g = T.sigmoid(T.slice_axis(gates, 1, 0, h))
        f_g = T.sigmoid(T.slice_axis(gates, 1, h, 2 * h))
        g_g = T.tanh(T.slice_axis(gates, 1, 2 * h, 3 * h))
        o_g = T.sigmoid(T.slice_axis(gates, 1, 3 * h, 4 * h))
        cell = T.add(T.mul(f_g, cell), T.mul(i_g, g_g))
        hidden = T.mul(o_g, T.tanh(cell))
        outputs.append(hidden)
    stacked = T.concat(outputs, axis=0)
    return T.add(T.matmul(stacked, weights_t["head.w"]), weights_t["head.b"])


def assemble_input(
    prompt_emb: Tensor,
    base_params_t: dict[str, Tensor],
    config: ModelConfig,
    x_ids: np.ndarray,
    y_ids: np.ndarray | None = None,
) -> Tensor:
    """[virtual tokens; x; y] as one (L, hidden) embedding sequence."""
    x_ids = np.asarray(x_ids)
    if x_ids.size == 0:
        raise PtuneError("input ids must be non-empty")
    n_v = prompt_emb.shape[0]
    total = n_v + x_ids.size + (0 if y_ids is None else np.asarray(y_ids).size)
    if total > config.context_len:
        raise ModelInputError(f"assembled length {total} exceeds context {config.context_len}")
    parts = [prompt_emb, T.embedding(base_params_t["tok_emb"], x_ids)]
    if y_ids is not None and np.asarray(y_ids).size:
        parts.append(T.embedding(base_params_t["tok_emb"], np.asarray(y_ids)))
    return T.concat(parts, axis=0)


@dataclass(frozen=True)
class PtuneHyperparams:
    steps: int = 200
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-8
    warmup_steps: int = 50
    min_lr: float = 0.0
    seed: int = 0
    log_interval: int = 10


def _batch_loss(
    base_params_t,
    config: ModelConfig,
    prompt_emb: Tensor,
    batch: list[tuple[np.ndarray, np.ndarray]],
) -> Tensor:
    """Cross-entropy over target-segment positions only, padded batch."""
    n_v = prompt_emb.shape[0]
    h = config.hidden
    lengths = [n_v + len(x) + len(y) for x, y in batch]
    l_max = max(lengths)
    rows: list[Tensor] = []
    flat_idx: list[int] = []
    targets: list[int] = []
    for bi, (x, y) in enumerate(batch):
        if len(y) == 0:
            raise PtuneError("training example with empty target segment")
        emb = assemble_input(prompt_emb, base_params_t, config, x, y)
        pad = l_max - emb.shape[0]
        if pad:
            emb = T.concat([emb, Tensor(np.zeros((pad, h), dtype=np.float32))], axis=0)
        rows.append(T.reshape(emb, (1, l_max, h)))
        first_target_pos = n_v + len(x) - 1  # position predicting y[0]
        for j, tok in enumerate(y):
            flat_idx.append(bi * l_max + first_target_pos + j)
            targets.append(int(tok))
    stacked = T.concat(rows, axis=0)
    logits = forward_embedded(base_params_t, config, stacked, mode="eval")
    flat = T.reshape(logits, (len(batch) * l_max, config.vocab_size))
    picked = T.gather_rows(flat, np.asarray(flat_idx))
    return T.cross_entropy_logits(picked, np.asarray(targets))


def ptune_train(
    ckpt: Checkpoint,
    dataset: list[tuple[np.ndarray, np.ndarray]],
    spc: SoftPromptConfig,
    hp: PtuneHyperparams,
    init: PromptWeights | None = None,
) -> tuple[PromptWeights, list[dict]]:
    """Train prompt weights on (input ids, target ids) pairs; base stays frozen."""
    if not dataset:
        raise PtuneError("dataset is empty")
    base_hash = content_hash(ckpt.params)
    base_params_t = wrap_params(ckpt.params, requires_grad=False)
    weights = (init or init_prompt(spc, ckpt.config, seed=hp.seed)).copy()
    names = sorted(weights.params)
    state = init_adam(
        [weights.params[k] for k in names],
        lr=hp.lr,
        betas=hp.betas,
        eps=hp.eps,
        weight_decay=hp.weight_decay,
    )
    schedule = LrSchedule(
        peak_lr=hp.lr,
        warmup_steps=min(hp.warmup_steps, max(hp.steps - 1, 0)),
        total_steps=max(hp.steps, 1),
        min_lr=hp.min_lr,
    )
    rng = np.random.Generator(np.random.Philox(key=hp.seed))
    trace: list[dict] = []
    order: list[int] = []
    for step in range(hp.steps):
        batch: list[tuple[np.ndarray, np.ndarray]] = []
        while len(batch) < hp.batch_size:
            if not order:
                order = list(rng.permutation(len(dataset)))
            batch.append(dataset[order.pop()])
        weights_t = {k: Tensor(v, requires_grad=True) for k, v in weights.params.items()}
        prompt_emb = prompt_graph(weights_t, spc, ckpt.config)
        loss = _batch_loss(base_params_t, ckpt.config, prompt_emb, batch)
        T.backward(loss)
        state.lr = lr_at(schedule, min(step + 1, schedule.total_steps))
        updated = adam_step([weights.params[k] for k in names], [weights_t[k].grad for k in names], state)
        weights.params = dict(zip(names, updated))
        if (step + 1) % hp.log_interval == 0 or step == 0 or step + 1 == hp.steps:
            trace.append({"step": step + 1, "lr": state.lr, "loss": float(loss.data)})
    weights.step += hp.steps
    if content_hash(ckpt.params) != base_hash:
        raise PtuneError("base checkpoint changed during prompt tuning")
    return weights, trace


def prompt_embeddings(weights: PromptWeights, config: ModelConfig) -> np.ndarray:
    """Prompt embeddings as plain numpy, for inference."""
    weights_t = {k: Tensor(v, requires_grad=False) for k, v in weights.params.items()}
    return prompt_graph(weights_t, weights.spc, config).data


def ptune_infer(
    ckpt: Checkpoint,
    weights: PromptWeights,
    x_ids,
    *,
    max_new_tokens: int = 64,
    stop_ids: frozenset[int] = frozenset(),
) -> list[int]:
    """Greedy continuation of [virtual tokens; x]; returns generated ids."""
    x_ids = np.asarray(x_ids)
    if x_ids.size == 0:
        raise PtuneError("input ids must be non-empty")
    prompt = prompt_embeddings(weights, ckpt.config)
    if prompt.shape[0] + x_ids.size >= ckpt.config.context_len:
        raise ModelInputError("assembled input leaves no room to generate")
    prefix = np.concatenate([prompt, ckpt.params["tok_emb"][x_ids]], axis=0)
    return generate_greedy(ckpt.params, ckpt.config, prefix, max_new_tokens=max_new_tokens, stop_ids=stop_ids)


def save_prompt(weights: PromptWeights, path: str | Path) -> None:
    path = Path(path)
    meta = {
        "format": "cliniclm-prompt",
        "version": 1,
        "task_name": weights.spc.task_name,
        "n_virtual": weights.spc.n_virtual,
        "encoder_kind": weights.spc.encoder_kind,
        "encoder_hidden": weights.spc.encoder_hidden,
        "step": weights.step,
    }
    arrays = {f"param:{k}": v for k, v in weights.params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_prompt(path: str | Path) -> PromptWeights:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format") != "cliniclm-prompt":
            raise PtuneError(f"{path}: not a prompt-weights file")
        params = {k[len("param:"):]: z[k] for k in z.files if k.startswith("param:")}
    spc = SoftPromptConfig(
        n_virtual=meta["n_virtual"],
        encoder_kind=meta["encoder_kind"],
        encoder_hidden=meta["encoder_hidden"],
        task_name=meta["task_name"],
    )
    return PromptWeights(spc=spc, params=params, step=int(meta["step"]))
