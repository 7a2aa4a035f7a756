"""Checkpoint container and serialization.

A checkpoint is the model config, the named parameter arrays, the training
step, and a digest over all parameter bytes. Files are .npz archives with a
JSON metadata entry; the digest is verified on load.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, forward_graph, init_params, wrap_params


class CheckpointError(ValueError):
    pass


def content_hash(params: dict[str, np.ndarray]) -> str:
    """SHA-256 over (name, dtype, shape, raw bytes) in sorted name order."""
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    train_step: int
    content_hash: str

    @classmethod
    def build(cls, config: ModelConfig, params: dict[str, np.ndarray], train_step: int = 0) -> "Checkpoint":
        return cls(config=config, params=params, train_step=train_step, content_hash=content_hash(params))

    def forward(self, tokens, mode: str = "eval", rng=None):
        """Causal forward pass; returns (B, L, V) logits as a numpy array."""
        needs_grad = False
        params_t = wrap_params(self.params, requires_grad=needs_grad)
        return forward_graph(params_t, self.config, tokens, mode=mode, rng=rng).data


def init_model(config: ModelConfig, dtype: str = "fp32") -> Checkpoint:
    """Fresh model; deterministic for a given (config, init_seed)."""
    return Checkpoint.build(config, init_params(config, dtype=dtype), train_step=0)


def forward(ckpt: Checkpoint, tokens, mode: str = "eval", rng=None) -> np.ndarray:
    return ckpt.forward(tokens, mode=mode, rng=rng)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    meta = {
        "format": "cliniclm-checkpoint",
        "version": 1,
        "config": ckpt.config.to_dict(),
        "train_step": ckpt.train_step,
        "content_hash": ckpt.content_hash,
    }
    arrays = {f"param:{k}": v for k, v in ckpt.params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path) as z:
        try:
            meta = json.loads(bytes(z["__meta__"]).decode())
        except KeyError:
            raise CheckpointError(f"{path}: missing metadata entry")
        if meta.get("format") != "cliniclm-checkpoint":
            raise CheckpointError(f"{path}: not a checkpoint file")
        params = {k[len("param:"):]: z[k] for k in z.files if k.startswith("param:")}
    config = ModelConfig.from_dict(meta["config"])
    digest = content_hash(params)
    if digest != meta["content_hash"]:
        raise CheckpointError(f"{path}: parameter digest mismatch")
    return Checkpoint(config=config, params=params, train_step=int(meta["train_step"]), content_hash=digest)
