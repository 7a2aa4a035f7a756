"""Byte-pair-encoding tokenizer with byte fallback.

The base alphabet is all 256 byte values, so any text encodes without
unknown tokens and decode(encode(s)) == s exactly. Merges never cross
pre-token boundaries; newlines are always standalone pre-tokens, which
keeps the newline id stable as a stop/separator token. Training is
deterministic: ties between equally frequent pairs break toward the
lexicographically smallest pair.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

# A pre-token is a lone newline, a run of non-newline whitespace (only at
# segment starts; words swallow their trailing spaces), or a word plus its
# trailing non-newline whitespace.
import re

PRETOKEN_RE = re.compile(r"\n|[^\n\S]+|[^\n\s]+[^\n\S]*")

BASE_VOCAB = 256


class TokenizerError(ValueError):
    pass


@dataclass
class Vocabulary:
    merges: list[tuple[int, int]]
    id_to_token: list[bytes]
    byte_fallback: bool = True
    _ranks: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    @property
    def vocab_size(self) -> int:
        return BASE_VOCAB + len(self.merges)

    def token_bytes(self, token_id: int) -> bytes:
        return self.id_to_token[token_id]


def _pretoken_counts(texts: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for text in texts:
        for tok in PRETOKEN_RE.findall(text):
            counts[tok] += 1
    return counts


def _merge_seq(ids: tuple[int, ...], pair: tuple[int, int], new_id: int) -> tuple[int, ...]:
    out = []
    i = 0
    n = len(ids)
    while i < n:
        if i < n - 1 and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return tuple(out)


def train_tokenizer(texts: Iterable[str], vocab_size: int) -> Vocabulary:
    """Learn merges by pair frequency over unique pre-tokens."""
    if vocab_size < BASE_VOCAB:
        raise TokenizerError(f"vocab_size must be >= {BASE_VOCAB}")
    pretokens = _pretoken_counts(texts)
    if not pretokens:
        raise TokenizerError("empty corpus")

    seqs: dict[tuple[int, ...], int] = {}
    for tok, freq in pretokens.items():
        seqs[tuple(tok.encode("utf-8"))] = seqs.get(tuple(tok.encode("utf-8")), 0) + freq

    pair_counts: Counter = Counter()
    where: dict[tuple[int, int], set[tuple[int, ...]]] = {}
    for seq, freq in seqs.items():
        for pair in zip(seq, seq[1:]):
            pair_counts[pair] += freq
            where.setdefault(pair, set()).add(seq)

    merges: list[tuple[int, int]] = []
    id_to_token: list[bytes] = [bytes([i]) for i in range(BASE_VOCAB)]

    while len(merges) < vocab_size - BASE_VOCAB and pair_counts:
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        if pair_counts[best] < 2:
            break
        new_id = BASE_VOCAB + len(merges)
        merges.append(best)
        id_to_token.append(id_to_token[best[0]] + id_to_token[best[1]])

        touched = where.pop(best, set())
        for seq in touched:
            freq = seqs.pop(seq, None)
            if freq is None:
                continue
            new_seq = _merge_seq(seq, best, new_id)
            for pair in zip(seq, seq[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                s = where.get(pair)
                if s is not None:
                    s.discard(seq)
                    if not s:
                        where.pop(pair, None)
            seqs[new_seq] = seqs.get(new_seq, 0) + freq
            for pair in zip(new_seq, new_seq[1:]):
                pair_counts[pair] += freq
                where.setdefault(pair, set()).add(new_seq)

    return Vocabulary(merges=merges, id_to_token=id_to_token)


def _encode_pretoken(vocab: Vocabulary, data: bytes) -> list[int]:
    ids = list(data)
    ranks = vocab._ranks
    while len(ids) > 1:
        best_rank = None
        best_i = -1
        for i in range(len(ids) - 1):
            r = ranks.get((ids[i], ids[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_i = i
        if best_rank is None:
            break
        ids[best_i : best_i + 2] = [BASE_VOCAB + best_rank]
    return ids


def encode(vocab: Vocabulary, text: str) -> list[int]:
    out: list[int] = []
    for tok in PRETOKEN_RE.findall(text):
        out.extend(_encode_pretoken(vocab, tok.encode("utf-8")))
    return out


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    data = b"".join(vocab.id_to_token[i] for i in ids)
    return data.decode("utf-8", errors="replace")


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": "cliniclm-bpe",
        "version": 1,
        "vocab_size": vocab.vocab_size,
        "byte_fallback": vocab.byte_fallback,
        "merges": [list(p) for p in vocab.merges],
        "tokens": [vocab.id_to_token[i].hex() for i in range(vocab.vocab_size)],
    }
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "cliniclm-bpe":
        raise TokenizerError(f"{path}: not a vocabulary file")
    merges = [tuple(p) for p in payload["merges"]]
    id_to_token = [bytes.fromhex(t) for t in payload["tokens"]]
    vocab = Vocabulary(merges=merges, id_to_token=id_to_token, byte_fallback=payload.get("byte_fallback", True))
    if vocab.vocab_size != payload["vocab_size"]:
        raise TokenizerError(f"{path}: vocab size disagrees with merge list")
    for i, (a, b) in enumerate(merges):
        if id_to_token[BASE_VOCAB + i] != id_to_token[a] + id_to_token[b]:
            raise TokenizerError(f"{path}: merge {i} inconsistent with token table")
    return vocab
