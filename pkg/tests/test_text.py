import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cliniclm.text import (
    NoteDocument,
    dedup,
    normalize,
    read_corpus,
    sentence_spans,
    sentence_split,
    write_corpus,
)


class TestNormalize:
    def test_nbsp_becomes_space(self):
        assert normalize("a\xa0b") == "a b"

    def test_clean_ascii_unchanged(self):
        s = "The patient reports  chest pain.\nNo fever.\tStable."
        assert normalize(s) == s

    def test_entities_decoded_to_fixpoint(self):
        assert normalize("Tylenol &amp; codeine") == "Tylenol & codeine"
        assert normalize("x &amp;amp; y") == "x & y"

    def test_invalid_bytes_dropped(self):
        assert normalize(b"ab\xff\xfecd") == "abcd"

    def test_curly_quotes_and_dashes(self):
        assert normalize("“quote” – it’s") == '"quote" - it\'s'

    def test_control_chars_stripped(self):
        assert normalize("a\x00b\x07c") == "abc"

    def test_crlf_normalized(self):
        assert normalize("a\r\nb\rc") == "a\nb\nc"

    @given(st.text(max_size=200))
    @settings(max_examples=300, deadline=None)
    def test_idempotent(self, s):
        once = normalize(s)
        assert normalize(once) == once

    def test_idempotent_on_fuzz_corpus(self):
        rng = np.random.default_rng(0)
        alphabet = list("abc &;\xa0’“\r\n\t\x07") + ["&amp;", "&nbsp;", "—"]
        for _ in range(1000):
            s = "".join(rng.choice(alphabet) for _ in range(rng.integers(0, 40)))
            once = normalize(s)
            assert normalize(once) == once


def _doc(doc_id, body):
    return NoteDocument(doc_id=doc_id, sections=[("S", body)])


class TestDedup:
    def test_exact_duplicates_collapse(self):
        docs = [_doc("1", "alpha"), _doc("2", "alpha"), _doc("3", "beta")]
        out = dedup(docs)
        assert [d.doc_id for d in out] == ["1", "3"]

    def test_empty_documents_dropped(self):
        docs = [_doc("1", "   "), _doc("2", "content")]
        out = dedup(docs)
        assert [d.doc_id for d in out] == ["2"]

    def test_seeded_duplicate_clusters_removed_exactly(self):
        rng = np.random.default_rng(1)
        uniques = [f"body text number {i}" for i in range(20)]
        docs = [_doc(f"u{i}", b) for i, b in enumerate(uniques)]
        dup_count = 0
        for i, b in enumerate(uniques):
            for k in range(int(rng.integers(0, 4))):
                docs.append(_doc(f"d{i}-{k}", b))
                dup_count += 1
        rng.shuffle(docs)
        out = dedup(docs)
        assert len(out) == len(docs) - dup_count

    def test_idempotent_and_order_stable(self):
        docs = [_doc("1", "x"), _doc("2", "y"), _doc("3", "x")]
        once = dedup(docs)
        twice = dedup(once)
        assert [d.doc_id for d in once] == [d.doc_id for d in twice]

    def test_duplicate_detected_after_normalization(self):
        docs = [_doc("1", "a\xa0b"), _doc("2", "a b")]
        assert len(dedup(docs)) == 1


class TestSentences:
    def test_simple_split(self):
        assert sentence_split("A. B.") == ["A.", "B."]

    def test_abbreviations_do_not_split(self):
        assert sentence_split("Dr. Smith saw pt.") == ["Dr. Smith saw pt."]

    def test_empty_input(self):
        assert sentence_split("") == []

    def test_no_empty_sentences(self):
        for text in ["...", "  ", "a.  b.", "one! two? three."]:
            assert all(s.strip() for s in sentence_split(text))

    def test_spans_reconstruct_input(self):
        texts = [
            "First sentence. Second one! Third?",
            "Dr. Smith reviewed labs. Values stable.",
            "No punctuation at all",
            "  leading space. Trailing.  ",
        ]
        for text in texts:
            spans = sentence_spans(text)
            rebuilt = []
            cursor = 0
            for s, e in spans:
                assert text[cursor:s].strip() == ""  # gaps are whitespace
                rebuilt.append(text[cursor:s])
                rebuilt.append(text[s:e])
                cursor = e
            rebuilt.append(text[cursor:])
            assert "".join(rebuilt) == text

    def test_lowercase_continuation_not_split(self):
        assert sentence_split("Values at 1.5 mg. were stable.") == ["Values at 1.5 mg. were stable."]


class TestCorpusIO:
    def test_roundtrip(self, tmp_path):
        docs = [
            NoteDocument("a", [("H", "hello"), ("B", "body")], source="real"),
            NoteDocument("b", [("H", "unicode éñ")], source="synthetic"),
        ]
        path = tmp_path / "corpus.jsonl"
        write_corpus(docs, path)
        back = list(read_corpus(path))
        assert [d.doc_id for d in back] == ["a", "b"]
        assert back[0].sections == [("H", "hello"), ("B", "body")]
        assert back[1].source == "synthetic"
        assert back[1].sections[0][1] == "unicode éñ"
