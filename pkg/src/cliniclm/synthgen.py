"""Synthetic-corpus production.

Seeds are the first 15 tokens of each qualifying note section. Generation
walks variants-outer / seeds-inner (every seed gets variant 0 before any
seed is reused), derives one Philox seed per (seed, variant) pair, and
keeps going until the cumulative whitespace word count reaches the target.
Records stream to a JSONL file; a manifest summarizes totals and carries
the config digest so a rerun or resume is byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from . import bpe
from .checkpoint import Checkpoint
from .sampling import SamplerConfig, generate
from .text import NoteDocument

SEED_TOKENS = 15


class SynthgenError(ValueError):
    pass


@dataclass(frozen=True)
class SeedPrompt:
    seed_id: str
    source_doc_id: str
    section_name: str
    token_ids: tuple[int, ...]
    text: str

    def __post_init__(self):
        if len(self.token_ids) != SEED_TOKENS:
            raise SynthgenError(f"seed must hold exactly {SEED_TOKENS} tokens")


@dataclass
class SeedExtraction:
    seeds: list[SeedPrompt]
    skipped_short: int
    collapsed_duplicates: int


def extract_seeds(corpus: Iterable[NoteDocument], vocab: bpe.Vocabulary) -> SeedExtraction:
    """One seed per section with >= 15 tokens; duplicate openings collapse."""
    seeds: list[SeedPrompt] = []
    seen: set[tuple[int, ...]] = set()
    skipped = 0
    collapsed = 0
    for doc in corpus:
        for section_name, body in doc.sections:
            ids = bpe.encode(vocab, body)
            if len(ids) < SEED_TOKENS:
                skipped += 1
                continue
            opening = tuple(ids[:SEED_TOKENS])
            if opening in seen:
                collapsed += 1
                continue
            seen.add(opening)
            seeds.append(
                SeedPrompt(
                    seed_id=f"seed-{len(seeds):06d}",
                    source_doc_id=doc.doc_id,
                    section_name=section_name,
                    token_ids=opening,
                    text=bpe.decode(vocab, opening),
                )
            )
    return SeedExtraction(seeds=seeds, skipped_short=skipped, collapsed_duplicates=collapsed)


@dataclass(frozen=True)
class GenerationRecord:
    record_id: str
    seed_id: str
    rng_seed: int
    top_p: float
    temperature: float
    max_new_tokens: int
    output_text: str
    output_token_count: int
    word_count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "record_id": self.record_id,
                "seed_id": self.seed_id,
                "rng_seed": self.rng_seed,
                "top_p": self.top_p,
                "temperature": self.temperature,
                "max_new_tokens": self.max_new_tokens,
                "output_text": self.output_text,
                "output_token_count": self.output_token_count,
                "word_count": self.word_count,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "GenerationRecord":
        return cls(**json.loads(line))


def word_count(text: str) -> int:
    return len(text.split())


def _variant_seed(base_seed: int, seed_id: str, variant: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{seed_id}:{variant}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _config_digest(cfg: SamplerConfig, base_seed: int, variants: int, target_words: int) -> str:
    payload = json.dumps(
        {
            "top_p": cfg.top_p,
            "temperature": cfg.temperature,
            "max_new_tokens": cfg.max_new_tokens,
            "base_seed": base_seed,
            "variants_per_seed": variants,
            "target_words": target_words,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def generate_corpus(
    ckpt: Checkpoint,
    seeds: list[SeedPrompt],
    vocab: bpe.Vocabulary,
    *,
    target_words: int,
    variants_per_seed: int = 2,
    cfg: SamplerConfig | None = None,
    base_seed: int = 0,
    out_path: str | Path | None = None,
    resume: bool = False,
) -> tuple[list[GenerationRecord], dict]:
    """Generate records until the word target is met; returns (records, manifest)."""
    if target_words < 1:
        raise SynthgenError("target_words must be >= 1")
    if variants_per_seed < 1:
        raise SynthgenError("variants_per_seed must be >= 1")
    if not seeds:
        raise SynthgenError("no seeds")
    cfg = cfg or SamplerConfig()

    records: list[GenerationRecord] = []
    done = 0
    if resume and out_path and Path(out_path).exists():
        records = list(read_records(out_path))
        done = len(records)

    total_words = sum(r.word_count for r in records)
    out_file = None
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        out_file = open(out_path, "a" if resume else "w", encoding="utf-8")

    shortfall = 0
    try:
        idx = -1
        for variant in range(variants_per_seed):
            for seed in seeds:
                idx += 1
                if total_words >= target_words:
                    break
                if idx < done:
                    continue  # already produced on a previous run
                rng_seed = _variant_seed(base_seed, seed.seed_id, variant)
                step_cfg = SamplerConfig(
                    top_p=cfg.top_p,
                    temperature=cfg.temperature,
                    max_new_tokens=cfg.max_new_tokens,
                    stop_ids=cfg.stop_ids,
                    rng_seed=rng_seed,
                )
                result = generate(ckpt, list(seed.token_ids), step_cfg)
                text = bpe.decode(vocab, result.full_ids)
                rec = GenerationRecord(
                    record_id=f"rec-{idx:06d}",
                    seed_id=seed.seed_id,
                    rng_seed=rng_seed,
                    top_p=step_cfg.top_p,
                    temperature=step_cfg.temperature,
                    max_new_tokens=step_cfg.max_new_tokens,
                    output_text=text,
                    output_token_count=len(result.new_ids),
                    word_count=word_count(text),
                )
                records.append(rec)
                total_words += rec.word_count
                if out_file:
                    out_file.write(rec.to_json() + "\n")
            if total_words >= target_words:
                break
        if total_words < target_words:
            shortfall = target_words - total_words
    finally:
        if out_file:
            out_file.close()

    manifest = {
        "format": "cliniclm-genmanifest",
        "version": 1,
        "config_digest": _config_digest(cfg, base_seed, variants_per_seed, target_words),
        "target_words": target_words,
        "variants_per_seed": variants_per_seed,
        "total_words": total_words,
        "total_tokens": sum(r.output_token_count for r in records),
        "records": len(records),
        "per_seed_counts": dict(sorted(Counter(r.seed_id for r in records).items())),
        "complete": shortfall == 0,
        "shortfall_words": shortfall,
        "sampler": {"top_p": cfg.top_p, "temperature": cfg.temperature, "max_new_tokens": cfg.max_new_tokens},
    }
    if shortfall:
        manifest["error"] = f"exhausted {len(seeds)}x{variants_per_seed} seed-variants {shortfall} words short of target"
    return records, manifest


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def read_records(path: str | Path) -> Iterator[GenerationRecord]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield GenerationRecord.from_json(line)


def corpus_stats(records: Iterable[GenerationRecord]) -> dict:
    """Totals, seed coverage, duplicate-output rate, and a length histogram."""
    records = list(records)
    n = len(records)
    digests = [hashlib.sha256(r.output_text.encode()).hexdigest() for r in records]
    duplicates = n - len(set(digests))
    hist: Counter = Counter()
    for r in records:
        hist[(r.output_token_count // 64) * 64] += 1
    return {
        "records": n,
        "total_words": sum(r.word_count for r in records),
        "total_tokens": sum(r.output_token_count for r in records),
        "distinct_seeds": len({r.seed_id for r in records}),
        "duplicate_outputs": duplicates,
        "duplicate_rate": duplicates / n if n else 0.0,
        "token_length_histogram": {str(k): v for k, v in sorted(hist.items())},
    }
