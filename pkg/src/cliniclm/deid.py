"""Safe-harbor de-identification.

Eighteen identifier categories are detected with a rule pipeline (regex
patterns, dictionaries, context keywords) loaded from a human-editable
YAML ruleset, and replaced with bracketed surrogates such as [**NAME**].
Ages are detected under the dates category but carry their own [**AGE**]
surrogate; every age is redacted, not just those over 89.

Detection never fires inside an existing surrogate, so redaction is
idempotent. Overlapping candidate spans are resolved longest-first, then
by rule priority (lower number wins), then by position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

# category -> surrogate tag; exactly the 18 safe-harbor identifier classes.
CATEGORIES: dict[str, str] = {
    "names": "NAME",
    "geographic": "LOCATION",
    "dates": "DATE",
    "phone": "PHONE",
    "fax": "FAX",
    "email": "EMAIL",
    "ssn": "SSN",
    "mrn": "MRN",
    "health_plan": "HEALTHPLAN",
    "account": "ACCOUNT",
    "license": "LICENSE",
    "vehicle": "VEHICLE",
    "device": "DEVICE",
    "url": "URL",
    "ip": "IP",
    "biometric": "BIOMETRIC",
    "photo": "PHOTO",
    "unique_id": "UNIQUEID",
}

# AGE rides along with the dates category but keeps its own tag.
SURROGATE_TAGS = frozenset(CATEGORIES.values()) | {"AGE"}

_TAG_RE = re.compile(r"\[\*\*[A-Z]+\*\*\]")
_DICT_REF_RE = re.compile(r"\{([a-z_]+)\}")


class RulesetError(ValueError):
    pass


class SpanError(ValueError):
    pass


@dataclass(frozen=True)
class PhiSpan:
    start: int
    end: int
    category: str
    surrogate: str
    matched_text: str
    rule_id: str


@dataclass(frozen=True)
class Rule:
    rule_id: str
    category: str
    pattern: re.Pattern
    group: int
    priority: int
    surrogate: str


@dataclass
class Ruleset:
    rules: list[Rule]
    dictionaries: dict[str, list[str]]


def _expand_dicts(pattern: str, dictionaries: dict[str, list[str]], rule_id: str) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in dictionaries:
            raise RulesetError(f"rule {rule_id}: unknown dictionary {name!r}")
        words = dictionaries[name]
        if not words:
            raise RulesetError(f"rule {rule_id}: dictionary {name!r} is empty")
        return "(?:" + "|".join(re.escape(w) for w in words) + ")"

    return _DICT_REF_RE.sub(sub, pattern)


def load_ruleset(path: str | Path | None = None) -> Ruleset:
    """Load and compile a ruleset; None loads the packaged default."""
    if path is None:
        raw = resources.files("cliniclm").joinpath("data/deid_rules.yaml").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise RulesetError(f"ruleset is not valid YAML: {e}")
    if not isinstance(doc, dict) or "rules" not in doc:
        raise RulesetError("ruleset must be a mapping with a 'rules' list")
    dictionaries = {k: list(v) for k, v in (doc.get("dictionaries") or {}).items()}
    rules: list[Rule] = []
    for entry in doc["rules"]:
        try:
            rule_id = entry["id"]
            category = entry["category"]
            pattern = entry["pattern"]
        except (KeyError, TypeError) as e:
            raise RulesetError(f"rule entry missing field: {e}")
        if category not in CATEGORIES:
            raise RulesetError(f"rule {rule_id}: unknown category {category!r}")
        surrogate = entry.get("surrogate", CATEGORIES[category])
        if surrogate not in SURROGATE_TAGS:
            raise RulesetError(f"rule {rule_id}: surrogate {surrogate!r} not in the fixed tag set")
        try:
            compiled = re.compile(_expand_dicts(pattern, dictionaries, rule_id))
        except re.error as e:
            raise RulesetError(f"rule {rule_id}: bad pattern: {e}")
        rules.append(
            Rule(
                rule_id=rule_id,
                category=category,
                pattern=compiled,
                group=int(entry.get("group", 0)),
                priority=int(entry.get("priority", 100)),
                surrogate=surrogate,
            )
        )
    if not rules:
        raise RulesetError("ruleset has no rules")
    return Ruleset(rules=rules, dictionaries=dictionaries)


def _protected_regions(text: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in _TAG_RE.finditer(text)]


def _overlaps(start: int, end: int, regions: list[tuple[int, int]]) -> bool:
    return any(start < e and s < end for s, e in regions)


def detect_phi(text: str, ruleset: Ruleset) -> list[PhiSpan]:
    """Non-overlapping, position-sorted identifier spans."""
    protected = _protected_regions(text)
    candidates: list[PhiSpan] = []
    for rule in ruleset.rules:
        for m in rule.pattern.finditer(text):
            start, end = m.span(rule.group)
            if start == end or _overlaps(start, end, protected):
                continue
            candidates.append(
                PhiSpan(
                    start=start,
                    end=end,
                    category=rule.category,
                    surrogate=rule.surrogate,
                    matched_text=text[start:end],
                    rule_id=rule.rule_id,
                )
            )
    priority = {r.rule_id: r.priority for r in ruleset.rules}
    candidates.sort(key=lambda s: (-(s.end - s.start), priority[s.rule_id], s.start))
    accepted: list[PhiSpan] = []
    taken: list[tuple[int, int]] = []
    for span in candidates:
        if not _overlaps(span.start, span.end, taken):
            accepted.append(span)
            taken.append((span.start, span.end))
    accepted.sort(key=lambda s: s.start)
    return accepted


def redact(text: str, spans: list[PhiSpan]) -> str:
    """Replace each span with its bracketed surrogate; bytes outside spans
    are untouched."""
    last = 0
    for span in spans:
        if span.start < last or span.end > len(text) or span.start >= span.end:
            raise SpanError(f"invalid or overlapping span at {span.start}:{span.end}")
        last = span.end
    parts: list[str] = []
    cursor = 0
    for span in spans:
        parts.append(text[cursor : span.start])
        parts.append(f"[**{span.surrogate}**]")
        cursor = span.end
    parts.append(text[cursor:])
    return "".join(parts)


def deidentify(text: str, ruleset: Ruleset) -> tuple[str, list[PhiSpan]]:
    spans = detect_phi(text, ruleset)
    return redact(text, spans), spans


def category_counts(spans: list[PhiSpan]) -> dict[str, int]:
    counts = {c: 0 for c in CATEGORIES}
    for s in spans:
        counts[s.category] += 1
    return counts
