"""Session-scoped pipelines shared by the heavier test modules.

Two labs get built once per session: a relation-extraction lab (corpus,
vocabulary, pretrained base model, task datasets) and a clinical-notes lab
(synthetic corpus, vocabulary, token stream). Both are deterministic.
"""

from dataclasses import dataclass

import numpy as np
import pytest

from cliniclm import bpe, datagen
from cliniclm.checkpoint import Checkpoint, init_model
from cliniclm.model import ModelConfig
from cliniclm.optim import LrSchedule
from cliniclm.training import train


@dataclass
class ReLab:
    vocab: object
    ckpt: Checkpoint
    newline_id: int
    train_pairs: list
    train_examples: list
    held_examples: list

    def encode_input(self, ex):
        return np.asarray(bpe.encode(self.vocab, ex.text + "\n"), dtype=np.int64)

    def encode_target(self, ex):
        return np.asarray(
            bpe.encode(self.vocab, datagen.CLAUSE_MARKER + ex.target_text + "\n"), dtype=np.int64
        )


@pytest.fixture(scope="session")
def re_lab() -> ReLab:
    text = datagen.make_re_pretrain_text(n_docs=4000, clause_fraction=0.45, seed=1)
    vocab = bpe.train_tokenizer([text], 2048)
    ids = np.asarray(bpe.encode(vocab, text), dtype=np.int64)
    config = ModelConfig(
        n_layers=2, hidden=96, n_heads=6, vocab_size=vocab.vocab_size,
        context_len=160, dropout=0.1, init_seed=5,
    )
    schedule = LrSchedule(peak_lr=3e-3, warmup_steps=50, total_steps=2500)
    result = train(
        init_model(config), ids, steps=2500, batch_size=16,
        schedule=schedule, seed=11, seq_len=48, log_interval=500,
    )
    examples = datagen.make_re_examples(600, seed=21)
    lab = ReLab(
        vocab=vocab,
        ckpt=result.checkpoint,
        newline_id=bpe.encode(vocab, "\n")[0],
        train_pairs=[],
        train_examples=examples[:500],
        held_examples=examples[500:],
    )
    lab.train_pairs = [(lab.encode_input(ex), lab.encode_target(ex)) for ex in lab.train_examples]
    return lab


@dataclass
class ClinicLab:
    corpus_docs: list
    corpus_text: str
    vocab: object
    token_stream: np.ndarray
    config: ModelConfig
    init_ckpt: Checkpoint


@pytest.fixture(scope="session")
def clinic_lab() -> ClinicLab:
    # de-identification runs before tokenizer training, so surrogate tags
    # tokenize as near-atomic sequences
    from cliniclm.deid import deidentify, load_ruleset
    from cliniclm.text import NoteDocument, normalize

    docs = datagen.make_clinical_corpus(n_docs=1600, seed=2)
    phi_docs, _ = datagen.make_phi_corpus(n_docs=30, seed=3)
    ruleset = load_ruleset()
    for doc in phi_docs:
        sections = [(n, deidentify(normalize(b), ruleset)[0]) for n, b in doc.sections]
        docs.append(NoteDocument(doc_id=doc.doc_id, sections=sections, source=doc.source))
    text = "\n".join(d.full_text() for d in docs) + "\n"
    vocab = bpe.train_tokenizer([text], 1024)
    stream = np.asarray(bpe.encode(vocab, text), dtype=np.int64)
    config = ModelConfig(
        n_layers=2, hidden=128, n_heads=4, vocab_size=vocab.vocab_size,
        context_len=256, dropout=0.1, init_seed=7,
    )
    return ClinicLab(
        corpus_docs=docs,
        corpus_text=text,
        vocab=vocab,
        token_stream=stream,
        config=config,
        init_ckpt=init_model(config),
    )
