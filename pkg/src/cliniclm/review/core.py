"""Blinded-review session backend.

Passages of known origin are ingested, shuffled, and served to raters one
at a time with the origin stripped from every rater-facing payload. Each
rater sees an independent order derived from (shuffle_seed, rater_id).
State persists as an append-only JSONL journal per session, fsynced
before any acknowledgement, so a crash replays to the identical state; a
snapshot of the finalized state is written next to the journal.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..stats import ItemJudgment, RaterRecord, TuringReport, turing_report

TOKEN_CAP = 512


class ReviewError(ValueError):
    pass


class UnknownEntityError(ReviewError):
    pass


class DuplicateRatingError(ReviewError):
    pass


class FinalizedError(ReviewError):
    pass


class IncompleteSessionError(ReviewError):
    pass


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    text: str
    hidden_origin: str  # "AI" or "Human"; never serialized to raters
    section_name: str = ""


@dataclass
class Rating:
    rater_id: str
    item_id: str
    readability: int
    relevance: int
    origin_guess: str
    submitted_at: float


@dataclass
class Session:
    session_id: str
    items: list[ReviewItem]
    rater_ids: list[str]
    shuffle_seed: int
    created_at: float
    state: str = "open"  # open | finalized
    partial: bool = False
    ratings: dict[tuple[str, str], Rating] = field(default_factory=dict)

    def rater_order(self, rater_id: str) -> list[int]:
        key = int.from_bytes(hashlib.sha256(f"{self.shuffle_seed}:{rater_id}".encode()).digest()[:8], "big")
        rng = np.random.Generator(np.random.Philox(key=key))
        return list(rng.permutation(len(self.items)))


def whitespace_token_count(text: str) -> int:
    return len(text.split())


class SessionStore:
    """Durable store for review sessions under one data directory."""

    def __init__(self, data_dir: str | Path, token_counter: Callable[[str], int] | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.token_counter = token_counter or whitespace_token_count
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        for journal in sorted(self.data_dir.glob("*.journal")):
            session = self._replay(journal)
            self._sessions[session.session_id] = session

    # -- persistence ----------------------------------------------------

    def _journal_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.journal"

    def _append(self, session_id: str, event: dict) -> None:
        path = self._journal_path(session_id)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _replay(self, journal: Path) -> Session:
        session: Session | None = None
        with open(journal, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                event = json.loads(line)
                kind = event["event"]
                if kind == "create":
                    session = Session(
                        session_id=event["session_id"],
                        items=[ReviewItem(**item) for item in event["items"]],
                        rater_ids=list(event["rater_ids"]),
                        shuffle_seed=int(event["shuffle_seed"]),
                        created_at=float(event["created_at"]),
                    )
                elif kind == "rating":
                    assert session is not None
                    r = Rating(**event["rating"])
                    session.ratings[(r.rater_id, r.item_id)] = r
                elif kind == "finalize":
                    assert session is not None
                    session.state = "finalized"
                    session.partial = bool(event.get("partial", False))
        if session is None:
            raise ReviewError(f"journal {journal} holds no session")
        return session

    # -- operations -----------------------------------------------------

    def create_session(
        self,
        ai_passages: list[str | tuple[str, str]],
        human_passages: list[str | tuple[str, str]],
        rater_ids: list[str],
        shuffle_seed: int,
    ) -> Session:
        if not ai_passages or not human_passages:
            raise ReviewError("both passage lists must be non-empty")
        if not rater_ids:
            raise ReviewError("rater list must be non-empty")
        if len(set(rater_ids)) != len(rater_ids):
            raise ReviewError("duplicate rater ids")

        def unpack(entry) -> tuple[str, str]:
            if isinstance(entry, tuple):
                return entry
            return entry, ""

        labeled = [(unpack(p), "AI") for p in ai_passages] + [(unpack(p), "Human") for p in human_passages]
        digests = set()
        items: list[ReviewItem] = []
        for (text, section), origin in labeled:
            tokens = self.token_counter(text)
            if tokens > TOKEN_CAP:
                raise ReviewError(
                    f"passage of {tokens} tokens exceeds the {TOKEN_CAP}-token cap; truncate before ingest"
                )
            digest = hashlib.sha256(text.encode()).hexdigest()
            if digest in digests:
                raise ReviewError("duplicate passage text")
            digests.add(digest)
            items.append(ReviewItem(item_id="", text=text, hidden_origin=origin, section_name=section))

        with self._lock:
            session_id = f"session-{len(self._sessions):04d}-{hashlib.sha256(str(shuffle_seed).encode()).hexdigest()[:8]}"
            rng = np.random.Generator(np.random.Philox(key=shuffle_seed))
            order = rng.permutation(len(items))
            shuffled = [
                ReviewItem(
                    item_id=f"item-{pos:04d}",
                    text=items[i].text,
                    hidden_origin=items[i].hidden_origin,
                    section_name=items[i].section_name,
                )
                for pos, i in enumerate(order)
            ]
            session = Session(
                session_id=session_id,
                items=shuffled,
                rater_ids=list(rater_ids),
                shuffle_seed=shuffle_seed,
                created_at=time.time(),
            )
            self._append(
                session_id,
                {
                    "event": "create",
                    "session_id": session_id,
                    "items": [item.__dict__ for item in shuffled],
                    "rater_ids": session.rater_ids,
                    "shuffle_seed": shuffle_seed,
                    "created_at": session.created_at,
                },
            )
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownEntityError(f"no session {session_id}")

    def next_item(self, session_id: str, rater_id: str) -> dict:
        """Blinded payload for the rater's next unrated item, or a done marker."""
        with self._lock:
            session = self.get(session_id)
            if session.state == "finalized":
                raise FinalizedError("session is finalized")
            if rater_id not in session.rater_ids:
                raise UnknownEntityError(f"rater {rater_id} not registered")
            done = sum(1 for (r, _i) in session.ratings if r == rater_id)
            total = len(session.items)
            for idx in session.rater_order(rater_id):
                item = session.items[idx]
                if (rater_id, item.item_id) not in session.ratings:
                    return {
                        "item_id": item.item_id,
                        "text": item.text,
                        "progress": {"done": done, "total": total},
                    }
            return {"done": True, "progress": {"done": done, "total": total}}

    def submit_rating(
        self,
        session_id: str,
        rater_id: str,
        item_id: str,
        readability: int,
        relevance: int,
        origin_guess: str,
    ) -> dict:
        with self._lock:
            session = self.get(session_id)
            if session.state == "finalized":
                raise FinalizedError("session is finalized")
            if rater_id not in session.rater_ids:
                raise UnknownEntityError(f"rater {rater_id} not registered")
            if item_id not in {i.item_id for i in session.items}:
                raise UnknownEntityError(f"no item {item_id}")
            for name, value in (("readability", readability), ("relevance", relevance)):
                if not (1 <= int(value) <= 9):
                    raise ReviewError(f"{name} must be on the 1..9 scale")
            if origin_guess not in ("AI", "Human"):
                raise ReviewError("origin_guess must be AI or Human")
            if (rater_id, item_id) in session.ratings:
                raise DuplicateRatingError(f"{rater_id} already rated {item_id}")
            rating = Rating(
                rater_id=rater_id,
                item_id=item_id,
                readability=int(readability),
                relevance=int(relevance),
                origin_guess=origin_guess,
                submitted_at=time.time(),
            )
            # Journal first; acknowledge only after the append is durable.
            self._append(session_id, {"event": "rating", "rating": rating.__dict__})
            session.ratings[(rater_id, item_id)] = rating
            return {"accepted": True, "rater_id": rater_id, "item_id": item_id}

    def finalize(self, session_id: str, partial: bool = False) -> list[RaterRecord]:
        with self._lock:
            session = self.get(session_id)
            if session.state == "finalized":
                raise FinalizedError("session already finalized")
            expected = len(session.items) * len(session.rater_ids)
            if len(session.ratings) != expected and not partial:
                raise IncompleteSessionError(
                    f"{len(session.ratings)} of {expected} ratings present; pass partial to finalize anyway"
                )
            self._append(session_id, {"event": "finalize", "partial": partial})
            session.state = "finalized"
            session.partial = partial
            bundle = self.bundle(session_id)
            snapshot = {
                "session_id": session_id,
                "state": session.state,
                "partial": partial,
                "ratings": len(session.ratings),
                "raters": session.rater_ids,
                "items": len(session.items),
            }
            (self.data_dir / f"{session_id}.snapshot.json").write_text(
                json.dumps(snapshot, indent=2), encoding="utf-8"
            )
            return bundle

    def bundle(self, session_id: str) -> list[RaterRecord]:
        """Per-rater guesses joined with hidden origins, for the statistics."""
        session = self.get(session_id)
        if session.state != "finalized":
            raise ReviewError("session is not finalized")
        origin = {i.item_id: i.hidden_origin for i in session.items}
        records = []
        for rater_id in session.rater_ids:
            judgments = tuple(
                ItemJudgment(
                    item_id=r.item_id,
                    origin=origin[r.item_id],
                    guess=r.origin_guess,
                    readability=r.readability,
                    relevance=r.relevance,
                )
                for (rr, _), r in sorted(session.ratings.items())
                if rr == rater_id
            )
            records.append(RaterRecord(rater_id=rater_id, judgments=judgments))
        return records

    def report(self, session_id: str, **kwargs) -> TuringReport:
        return turing_report(self.bundle(session_id), **kwargs)

    def export_ratings(self, session_id: str) -> str:
        """One JSON rating per line."""
        session = self.get(session_id)
        lines = [json.dumps(r.__dict__, sort_keys=True) for _, r in sorted(session.ratings.items())]
        return "\n".join(lines) + ("\n" if lines else "")

    def session_ids(self) -> list[str]:
        return sorted(self._sessions)
