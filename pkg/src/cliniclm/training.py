"""Language-model training loop on a flat token stream.

A seeded 3% contiguous slice of the corpus is held out for validation;
train batches are random windows drawn outside that slice. Optimization is
Adam with decoupled weight decay under a warmup + cosine schedule. Both
train and held-out loss are logged every ``log_interval`` steps, and the
whole run is deterministic for fixed seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .model import ModelConfig, forward_graph, lm_loss, wrap_params
from .optim import LrSchedule, adam_step, init_adam, lr_at


class CorpusError(ValueError):
    pass


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    trace: list[dict] = field(default_factory=list)


def _split_corpus(corpus: np.ndarray, window: int, val_fraction: float, rng: np.random.Generator):
    """Carve a seeded contiguous validation block out of the stream."""
    n = len(corpus)
    val_len = max(window, int(round(n * val_fraction)))
    if val_len >= n - window:
        raise CorpusError("corpus too small to hold out a validation slice")
    val_start = int(rng.integers(0, n - val_len + 1))
    val = corpus[val_start : val_start + val_len]
    starts = np.arange(0, n - window + 1)
    keep = (starts + window <= val_start) | (starts >= val_start + val_len)
    train_starts = starts[keep]
    if len(train_starts) == 0:
        raise CorpusError("no training windows left after the validation split")
    return val, train_starts


def _val_windows(val: np.ndarray, window: int, max_windows: int = 4) -> np.ndarray:
    count = min(max_windows, len(val) // window)
    count = max(count, 1)
    return np.stack([val[i * window : i * window + window] for i in range(count)])


def _eval_loss(params, config: ModelConfig, batch: np.ndarray) -> float:
    params_t = wrap_params(params, requires_grad=False)
    logits = forward_graph(params_t, config, batch, mode="eval")
    return float(lm_loss(logits, batch).data)


def train(
    ckpt: Checkpoint,
    corpus: np.ndarray,
    *,
    steps: int,
    batch_size: int,
    schedule: LrSchedule | None = None,
    seed: int = 0,
    seq_len: int | None = None,
    log_interval: int = 10,
    val_fraction: float = 0.03,
) -> TrainResult:
    """Train for ``steps`` optimizer updates; returns a new checkpoint and trace."""
    config = ckpt.config
    corpus = np.asarray(corpus, dtype=np.int64)
    if corpus.ndim != 1:
        raise CorpusError("corpus must be a 1-D token stream")
    if seq_len is None:
        seq_len = min(config.context_len - 1, 128)
    window = seq_len + 1  # inputs plus one shifted target
    if window > config.context_len:
        raise CorpusError(f"seq_len {seq_len} + 1 exceeds context {config.context_len}")
    if len(corpus) < window * batch_size:
        raise CorpusError("corpus does not provide one full batch")
    if corpus.min() < 0 or corpus.max() >= config.vocab_size:
        raise CorpusError("corpus token id out of range for model vocabulary")
    if schedule is None:
        total = max(steps, 1)
        schedule = LrSchedule(peak_lr=1e-4, warmup_steps=min(50, total // 10), total_steps=total)

    rng = np.random.Generator(np.random.Philox(key=seed))
    val, train_starts = _split_corpus(corpus, window, val_fraction, rng)
    val_batch = _val_windows(val, window)
    dropout_rng = np.random.Generator(np.random.Philox(key=seed + 1))

    names = sorted(ckpt.params)
    params = {k: ckpt.params[k].copy() for k in names}
    state = init_adam([params[k] for k in names], lr=schedule.peak_lr)

    trace: list[dict] = []

    def log(step: int, lr: float, train_loss: float | None) -> None:
        entry = {
            "step": step,
            "lr": lr,
            "train_loss": train_loss,
            "val_loss": _eval_loss(params, config, val_batch),
        }
        trace.append(entry)

    if steps == 0:
        return TrainResult(checkpoint=ckpt, trace=trace)

    log(0, lr_at(schedule, 0), None)
    for step in range(steps):
        starts = rng.choice(train_starts, size=batch_size, replace=True)
        batch = np.stack([corpus[s : s + window] for s in starts])
        params_t = wrap_params(params, requires_grad=True)
        logits = forward_graph(params_t, config, batch, mode="train", rng=dropout_rng)
        loss = lm_loss(logits, batch)
        T.backward(loss)
        grads = [params_t[k].grad for k in names]
        state.lr = lr_at(schedule, min(step + 1, schedule.total_steps))
        updated = adam_step([params[k] for k in names], grads, state)
        params = dict(zip(names, updated))
        if (step + 1) % log_interval == 0 or step + 1 == steps:
            log(step + 1, state.lr, float(loss.data))

    new_ckpt = Checkpoint.build(config, params, train_step=ckpt.train_step + steps)
    return TrainResult(checkpoint=new_ckpt, trace=trace)
