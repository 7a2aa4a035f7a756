import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cliniclm.bpe import (
    TokenizerError,
    decode,
    encode,
    load_vocab,
    save_vocab,
    train_tokenizer,
)

CORPUS = [
    "the patient reports chest pain and shortness of breath",
    "the patient denies fever chills or night sweats",
    "follow up in two weeks with repeat labs",
    "medications reviewed and reconciled at this visit",
    "no acute distress on examination today",
] * 20


@pytest.fixture(scope="module")
def vocab():
    return train_tokenizer(CORPUS, 400)


class TestTraining:
    def test_deterministic(self):
        a = train_tokenizer(CORPUS, 300)
        b = train_tokenizer(CORPUS, 300)
        assert a.merges == b.merges

    def test_vocab_too_small_rejected(self):
        with pytest.raises(TokenizerError):
            train_tokenizer(CORPUS, 100)

    def test_empty_corpus_rejected(self):
        with pytest.raises(TokenizerError):
            train_tokenizer([], 300)

    def test_ids_dense(self, vocab):
        assert len(vocab.id_to_token) == vocab.vocab_size
        ids = encode(vocab, CORPUS[0])
        assert all(0 <= i < vocab.vocab_size for i in ids)

    def test_merges_compress(self, vocab):
        text = CORPUS[0]
        assert len(encode(vocab, text)) < len(text.encode())


class TestRoundTrip:
    def test_single_byte(self, vocab):
        assert decode(vocab, encode(vocab, "x")) == "x"

    def test_exact_on_clinical_text(self, vocab):
        for text in CORPUS[:5]:
            assert decode(vocab, encode(vocab, text)) == text

    def test_exact_on_fuzz_set(self, vocab):
        rng = np.random.default_rng(0)
        pieces = [
            "patient", "pain", " ", "\n", "\t", "[**NAME**]", "éñ", "世界",
            "\U0001f600", "123", "!!", "mg/dL", "q.d.",
        ]
        for _ in range(10_000):
            s = "".join(rng.choice(pieces) for _ in range(rng.integers(0, 12)))
            assert decode(vocab, encode(vocab, s)) == s

    @given(st.text(max_size=80))
    @settings(max_examples=300, deadline=None)
    def test_exact_property(self, vocab, s):
        assert decode(vocab, encode(vocab, s)) == s

    def test_newline_is_atomic(self, vocab):
        # newline never merges, so it stays usable as a stop/separator id
        ids = encode(vocab, "one\ntwo\n")
        assert ids.count(10) == 2
        assert vocab.token_bytes(10) == b"\n"


class TestVocabIO:
    def test_roundtrip(self, vocab, tmp_path):
        path = tmp_path / "vocab.json"
        save_vocab(vocab, path)
        loaded = load_vocab(path)
        assert loaded.merges == vocab.merges
        assert loaded.id_to_token == vocab.id_to_token
        text = "the patient reports pain"
        assert encode(loaded, text) == encode(vocab, text)

    def test_corrupt_table_rejected(self, vocab, tmp_path):
        import json

        path = tmp_path / "vocab.json"
        save_vocab(vocab, path)
        payload = json.loads(path.read_text())
        payload["tokens"][300] = "ff00"
        path.write_text(json.dumps(payload))
        with pytest.raises(TokenizerError):
            load_vocab(path)
