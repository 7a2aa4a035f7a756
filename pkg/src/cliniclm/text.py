"""Corpus preprocessing: character normalization, document deduplication,
and rule-based sentence boundary detection.

Documents are note-shaped: an id, ordered named sections, and a real or
synthetic source marker. Corpus files hold one JSON document per line.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

# One-way character repairs applied after NFKC.
_CHAR_MAP = {
    "‘": "'",
    "’": "'",
    "“": '"',
    "”": '"',
    "–": "-",
    "—": "-",
    "…": "...",
    "­": "",
}

# Minimal HTML-entity set seen in exported notes; applied to a fixpoint so
# double-encoded text ("&amp;amp;") also settles.
_ENTITIES = {
    "&amp;": "&",
    "&lt;": "<",
    "&gt;": ">",
    "&quot;": '"',
    "&apos;": "'",
    "&nbsp;": " ",
}

_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")


def _normalize_pass(text: str) -> str:
    text = unicodedata.normalize("NFKC", text)
    for entity, repl in _ENTITIES.items():
        text = text.replace(entity, repl)
    for ch, repl in _CHAR_MAP.items():
        text = text.replace(ch, repl)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return _CONTROL_RE.sub("", text)


def normalize(text: str | bytes) -> str:
    """Repair encoding, decode entities, and canonicalize characters.

    Idempotent: normalize(normalize(x)) == normalize(x). Lossy repairs
    (dropped bytes, stripped control characters) are logged at DEBUG.
    """
    if isinstance(text, bytes):
        decoded = text.decode("utf-8", errors="ignore")
        if len(decoded.encode("utf-8")) != len(text):
            log.debug("normalize: dropped %d invalid bytes", len(text) - len(decoded.encode("utf-8")))
        text = decoded
    else:
        # Drop unpaired surrogates that a broken upstream decode left behind.
        text = text.encode("utf-8", errors="ignore").decode("utf-8", errors="ignore")
    for _ in range(10):
        repaired = _normalize_pass(text)
        if repaired == text:
            return repaired
        text = repaired
    log.debug("normalize: fixpoint not reached after 10 passes; returning last")
    return text


@dataclass
class NoteDocument:
    doc_id: str
    sections: list[tuple[str, str]]
    source: str = "real"  # "real" or "synthetic"

    def full_text(self) -> str:
        return "\n".join(body for _, body in self.sections)

    def normalized(self) -> "NoteDocument":
        """Normalize every section and drop ones that come back empty."""
        sections = []
        for name, body in self.sections:
            clean = normalize(body)
            if clean.strip():
                sections.append((name, clean))
        return NoteDocument(doc_id=self.doc_id, sections=sections, source=self.source)

    def digest(self) -> str:
        return hashlib.sha256(self.full_text().encode()).hexdigest()


def dedup(corpus: Iterable[NoteDocument]) -> list[NoteDocument]:
    """Drop empty documents and exact duplicates (post-normalization digest),
    keeping first occurrences in order."""
    seen: set[str] = set()
    out: list[NoteDocument] = []
    for doc in corpus:
        clean = doc.normalized()
        if not clean.sections:
            continue
        d = clean.digest()
        if d in seen:
            continue
        seen.add(d)
        out.append(clean)
    return out


# -- sentence boundaries -------------------------------------------------

# Trailing-word forms that do not close a sentence even before a capital.
ABBREVIATIONS = {
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "approx.", "dept.",
    "pt.", "pts.", "hx.", "fx.", "rx.", "tab.", "cap.", "fig.", "no.",
}

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s)")


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of sentences; gaps between spans are whitespace."""
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        end = m.end()
        tail = text[end:]
        nxt = tail.lstrip()
        if nxt and not (nxt[0].isupper() or nxt[0].isdigit()):
            continue
        word = text[:end].rsplit(None, 1)[-1] if text[:end].strip() else ""
        if word.lower() in ABBREVIATIONS:
            continue
        piece = text[start:end].strip()
        if piece:
            s = start + (len(text[start:end]) - len(text[start:end].lstrip()))
            spans.append((s, s + len(piece)))
        start = end
    piece = text[start:].strip()
    if piece:
        s = start + (len(text[start:]) - len(text[start:].lstrip()))
        spans.append((s, s + len(piece)))
    return spans


def sentence_split(text: str) -> list[str]:
    """Sentences with surrounding whitespace stripped; never empty strings."""
    return [text[s:e] for s, e in sentence_spans(text)]


# -- corpus files --------------------------------------------------------


def write_corpus(docs: Iterable[NoteDocument], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            rec = {"doc_id": doc.doc_id, "sections": [[n, b] for n, b in doc.sections], "source": doc.source}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> Iterator[NoteDocument]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            yield NoteDocument(
                doc_id=rec["doc_id"],
                sections=[(n, b) for n, b in rec["sections"]],
                source=rec.get("source", "real"),
            )
