"""Prompt-based task framing and scoring.

Relation extraction is treated as text generation: triplets serialize to
clauses of the form "the relation between [head] and [tail] is [relation]"
joined by "; ", with "no relation" as the empty sentinel. A literal ']'
inside a field is escaped as ']]'. Question answering uses a fixed
QUESTION / MULTIPLE CHOICES / TARGET template and parses the first choice
label (or yes/no/maybe keyword) out of the generated continuation.

Matching for scores is normalized: case-folded, whitespace-collapsed,
exact on all fields. Micro precision over an empty prediction set is 0 by
convention, and duplicate triplets collapse before scoring.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

CLAUSE_STEM = "the relation between ["
NO_RELATION = "no relation"
TARGET_STEM = "the answer to the question given possible options is:"


class TaskError(ValueError):
    pass


def _norm_field(s: str) -> str:
    return " ".join(s.split()).casefold()


@dataclass(frozen=True)
class Triplet:
    head: str
    tail: str
    relation: str

    def __post_init__(self):
        for name in ("head", "tail", "relation"):
            if not _norm_field(getattr(self, name)):
                raise TaskError(f"triplet {name} is empty")

    def normalized(self) -> tuple[str, str, str]:
        return (_norm_field(self.head), _norm_field(self.tail), _norm_field(self.relation))


def _escape(fieldtext: str) -> str:
    return fieldtext.replace("]", "]]")


def serialize_triplets(triplets: Sequence[Triplet]) -> str:
    if not triplets:
        return NO_RELATION
    clauses = [
        f"the relation between [{_escape(t.head)}] and [{_escape(t.tail)}] is [{_escape(t.relation)}]"
        for t in triplets
    ]
    return "; ".join(clauses)


def _read_field(text: str, pos: int) -> tuple[str, int] | None:
    """Consume an escaped field up to its closing ']'; None if unterminated."""
    out: list[str] = []
    i = pos
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "]":
            if i + 1 < n and text[i + 1] == "]":
                out.append("]")
                i += 2
                continue
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    return None


@dataclass
class ParseResult:
    triplets: set[Triplet] = field(default_factory=set)
    malformed_regions: int = 0


def parse_triplets(text: str) -> ParseResult:
    """Pull every well-formed clause out of arbitrary generated text.

    Malformed stretches are skipped; each maximal non-clause run of
    non-separator text counts as one diagnostic region.
    """
    result = ParseResult()
    if _norm_field(text) == NO_RELATION:
        return result
    consumed: list[tuple[int, int]] = []
    pos = 0
    lowered = text.casefold()
    while True:
        start = lowered.find(CLAUSE_STEM, pos)
        if start == -1:
            break
        parsed = _try_clause(text, start)
        if parsed is None:
            pos = start + 1
            continue
        triplet, end = parsed
        if triplet is not None:
            result.triplets.add(triplet)
            consumed.append((start, end))
        pos = end
    result.malformed_regions = _count_leftover_regions(text, consumed)
    return result


def _try_clause(text: str, start: int) -> tuple[Triplet | None, int] | None:
    pos = start + len(CLAUSE_STEM)
    head = _read_field(text, pos)
    if head is None:
        return None
    pos = head[1]
    if not text[pos:].startswith(" and ["):
        return None
    tail = _read_field(text, pos + len(" and ["))
    if tail is None:
        return None
    pos = tail[1]
    if not text[pos:].startswith(" is ["):
        return None
    rel = _read_field(text, pos + len(" is ["))
    if rel is None:
        return None
    try:
        triplet = Triplet(head=head[0], tail=tail[0], relation=rel[0])
    except TaskError:
        return None
    return triplet, rel[1]


_SEPARATOR_RE = re.compile(r"[;\s]+")


def _count_leftover_regions(text: str, consumed: list[tuple[int, int]]) -> int:
    cursor = 0
    regions = 0
    for start, end in sorted(consumed):
        gap = text[cursor:start]
        if _SEPARATOR_RE.sub("", gap):
            regions += 1
        cursor = end
    if _SEPARATOR_RE.sub("", text[cursor:]):
        regions += 1
    return regions


@dataclass(frozen=True)
class ReScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def score_re(gold: Iterable[Triplet], pred: Iterable[Triplet]) -> ReScore:
    gold_set = {t.normalized() for t in gold}
    pred_set = {t.normalized() for t in pred}
    tp = len(gold_set & pred_set)
    fp = len(pred_set - gold_set)
    fn = len(gold_set - pred_set)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ReScore(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


def score_re_corpus(pairs: Iterable[tuple[Iterable[Triplet], Iterable[Triplet]]]) -> ReScore:
    """Micro scores pooled over (gold, pred) pairs."""
    tp = fp = fn = 0
    for gold, pred in pairs:
        gold_set = {t.normalized() for t in gold}
        pred_set = {t.normalized() for t in pred}
        tp += len(gold_set & pred_set)
        fp += len(pred_set - gold_set)
        fn += len(gold_set - pred_set)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ReScore(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


# -- question answering --------------------------------------------------

_LABELS = string.ascii_uppercase
_YNM = ("yes", "no", "maybe")


@dataclass(frozen=True)
class QaExample:
    question: str
    choices: tuple[str, ...] = ()
    context: str | None = None
    gold: str = ""
    kind: str = "multiple_choice"  # or "yes_no_maybe"

    def __post_init__(self):
        if self.kind not in ("multiple_choice", "yes_no_maybe"):
            raise TaskError(f"unknown kind {self.kind!r}")
        if self.kind == "multiple_choice":
            if len(self.choices) < 2:
                raise TaskError("multiple_choice needs at least 2 choices")
            if len(self.choices) > len(_LABELS):
                raise TaskError("too many choices")
            if self.gold not in _LABELS[: len(self.choices)]:
                raise TaskError(f"gold {self.gold!r} not a choice label")
        else:
            if self.gold not in _YNM:
                raise TaskError(f"gold {self.gold!r} must be yes/no/maybe")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(_LABELS[: len(self.choices)])


def build_qa_prompt(ex: QaExample) -> str:
    parts: list[str] = []
    if ex.context:
        parts.append(f"CONTEXT: {ex.context}\n")
    parts.append(f"QUESTION: {ex.question}\n")
    if ex.kind == "multiple_choice":
        lines = [f"({label}) {choice}" for label, choice in zip(ex.labels, ex.choices)]
        parts.append("MULTIPLE CHOICES: " + "\n".join(lines) + "\n")
    parts.append(f"TARGET: {TARGET_STEM} ")
    return "".join(parts)


_PAREN_LABEL_RE = re.compile(r"\(([A-Za-z])\)")


def parse_answer(generated: str, ex: QaExample) -> str | None:
    """First choice label (or yes/no/maybe keyword) after the target stem."""
    idx = generated.find(TARGET_STEM)
    tail = generated[idx + len(TARGET_STEM) :] if idx != -1 else generated
    if ex.kind == "yes_no_maybe":
        m = re.search(r"\b(yes|no|maybe)\b", tail, flags=re.IGNORECASE)
        return m.group(1).lower() if m else None
    labels = set(ex.labels)
    for m in _PAREN_LABEL_RE.finditer(tail):
        if m.group(1).upper() in labels:
            return m.group(1).upper()
    m = re.search(r"\b([A-Za-z])\b", tail)
    if m and m.group(1).upper() in labels:
        return m.group(1).upper()
    return None


@dataclass(frozen=True)
class QaScore:
    accuracy: float
    n: int
    correct: int
    unparsed: int


def score_qa(pairs: Iterable[tuple[QaExample, str]]) -> QaScore:
    """Accuracy over (example, generated text) pairs; unparseable counts wrong."""
    n = correct = unparsed = 0
    for ex, generated in pairs:
        n += 1
        parsed = parse_answer(generated, ex)
        if parsed is None:
            unparsed += 1
        elif parsed == ex.gold:
            correct += 1
    return QaScore(accuracy=correct / n if n else 0.0, n=n, correct=correct, unparsed=unparsed)
