"""Tourist-record corpora: ingestion, indexing, filtering, and splits.

A tourist record is one geo-tagged observation: who (user), where (spot),
when (timestamp), and which activity words. A corpus indexes records
against dense user/spot/word vocabularies plus a fixed set of time slots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

NUM_TIME_SLOTS = 12


class CorpusError(ValueError):
    """Raised for malformed input rows or invalid corpus operations."""


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as exc:
        raise CorpusError(f"invalid timestamp {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def discretize_time(timestamp: datetime) -> int:
    """Map an instant to its calendar month-of-year slot in [0, 12)."""
    if timestamp.tzinfo is None:
        timestamp = timestamp.replace(tzinfo=timezone.utc)
    return timestamp.astimezone(timezone.utc).month - 1


@dataclass(frozen=True)
class TouristRecord:
    """One raw observation (user, spot, timestamp, activity words)."""

    user_id: str
    spot_id: str
    timestamp: datetime
    words: tuple[str, ...] = ()

    def __post_init__(self):
        if any(w == "" for w in self.words):
            raise CorpusError("activity words must be non-empty strings")


@dataclass(frozen=True)
class IndexedRecord:
    """A record re-expressed against a corpus's dense vocabularies."""

    user_idx: int
    spot_idx: int
    time_slot: int
    word_idxs: tuple[int, ...]
    timestamp: datetime


class Vocabulary:
    """Bijection between strings and dense integer indices."""

    def __init__(self, items: Iterable[str] = ()):
        self.items: list[str] = []
        self._index: dict[str, int] = {}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is None:
            idx = len(self.items)
            self._index[item] = idx
            self.items.append(item)
        return idx

    def index_of(self, item: str) -> int:
        return self._index[item]

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __getitem__(self, idx: int) -> str:
        return self.items[idx]

    def __len__(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.items == other.items

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.items)} items)"


@dataclass(frozen=True)
class Corpus:
    """Indexed record collection with shared vocabularies.

    Immutable after construction; safe to share across threads.
    """

    records: tuple[IndexedRecord, ...]
    users: Vocabulary
    spots: Vocabulary
    words: Vocabulary
    num_time_slots: int = NUM_TIME_SLOTS

    def __post_init__(self):
        if len(self.records) < 1:
            raise CorpusError("corpus must contain at least one record")

    def validate(self) -> None:
        """Check all index invariants; raises CorpusError on violation."""
        for vocab, name in ((self.users, "user"), (self.spots, "spot"), (self.words, "word")):
            if len(set(vocab.items)) != len(vocab.items):
                raise CorpusError(f"duplicate strings in {name} vocabulary")
        for rec in self.records:
            if not 0 <= rec.user_idx < len(self.users):
                raise CorpusError(f"user index {rec.user_idx} out of range")
            if not 0 <= rec.spot_idx < len(self.spots):
                raise CorpusError(f"spot index {rec.spot_idx} out of range")
            if not 0 <= rec.time_slot < self.num_time_slots:
                raise CorpusError(f"time slot {rec.time_slot} out of range")
            for w in rec.word_idxs:
                if not 0 <= w < len(self.words):
                    raise CorpusError(f"word index {w} out of range")

    @property
    def num_records(self) -> int:
        return len(self.records)

    def records_by_user(self) -> dict[int, list[IndexedRecord]]:
        by_user: dict[int, list[IndexedRecord]] = {}
        for rec in self.records:
            by_user.setdefault(rec.user_idx, []).append(rec)
        return by_user

    def summary(self) -> dict[str, int]:
        return {
            "users": len(self.users),
            "spots": len(self.spots),
            "records": len(self.records),
            "words": len(self.words),
            "time_slots": self.num_time_slots,
        }


@dataclass(frozen=True)
class SplitResult:
    train: Corpus
    test: Corpus
    mode: str  # "time" or "user"
    ratio: float


def from_records(records: Iterable[TouristRecord]) -> Corpus:
    """Build an indexed corpus; vocabularies in first-occurrence order."""
    users, spots, words = Vocabulary(), Vocabulary(), Vocabulary()
    indexed = []
    for rec in records:
        indexed.append(
            IndexedRecord(
                user_idx=users.add(rec.user_id),
                spot_idx=spots.add(rec.spot_id),
                time_slot=discretize_time(rec.timestamp),
                word_idxs=tuple(words.add(w) for w in rec.words),
                timestamp=rec.timestamp,
            )
        )
    if not indexed:
        raise CorpusError("no records to ingest")
    return Corpus(records=tuple(indexed), users=users, spots=spots, words=words)


def _iter_jsonl(path: Path) -> Iterator[TouristRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"row {lineno}: invalid JSON") from exc
            yield _row_to_record(row, lineno)


def _iter_csv(path: Path) -> Iterator[TouristRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            words = row.get("words") or ""
            yield _row_to_record(
                {
                    "user": row.get("user"),
                    "spot": row.get("spot"),
                    "time": row.get("time"),
                    "words": [w for w in words.split("|") if w != ""] if words else [],
                },
                lineno,
            )


def _row_to_record(row: dict, lineno: int) -> TouristRecord:
    for field in ("user", "spot", "time", "words"):
        if row.get(field) is None:
            raise CorpusError(f"row {lineno}: missing field {field!r}")
    if not isinstance(row["words"], list):
        raise CorpusError(f"row {lineno}: field 'words' must be a list")
    try:
        ts = parse_timestamp(str(row["time"]))
    except CorpusError as exc:
        raise CorpusError(f"row {lineno}: field 'time': {exc}") from None
    try:
        return TouristRecord(
            user_id=str(row["user"]),
            spot_id=str(row["spot"]),
            timestamp=ts,
            words=tuple(str(w) for w in row["words"]),
        )
    except CorpusError as exc:
        raise CorpusError(f"row {lineno}: {exc}") from None


def ingest(path: str | Path, format: str | None = None) -> Corpus:
    """Read a JSONL or CSV record file into an indexed corpus.

    The format is inferred from the file suffix when not given.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"input file not found: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unknown corpus format {format!r}")
    rows = _iter_csv(path) if format == "csv" else _iter_jsonl(path)
    try:
        corpus = from_records(rows)
    except CorpusError as exc:
        if "no records" in str(exc):
            raise CorpusError(f"empty corpus file: {path}") from None
        raise
    corpus.validate()
    return corpus


def serialize(corpus: Corpus, path: str | Path, format: str = "jsonl") -> None:
    """Write a corpus back out as JSONL or CSV rows."""
    path = Path(path)
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for rec in corpus.records:
                row = {
                    "user": corpus.users[rec.user_idx],
                    "spot": corpus.spots[rec.spot_idx],
                    "time": format_timestamp(rec.timestamp),
                    "words": [corpus.words[w] for w in rec.word_idxs],
                }
                fh.write(json.dumps(row) + "\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "spot", "time", "words"])
            for rec in corpus.records:
                words = [corpus.words[w] for w in rec.word_idxs]
                if any("|" in w for w in words):
                    raise CorpusError("CSV format cannot hold words containing '|'")
                writer.writerow(
                    [
                        corpus.users[rec.user_idx],
                        corpus.spots[rec.spot_idx],
                        format_timestamp(rec.timestamp),
                        "|".join(words),
                    ]
                )
    else:
        raise CorpusError(f"unknown corpus format {format!r}")


def filter_min_pois(corpus: Corpus, min_pois: int = 2) -> Corpus:
    """Keep only users who visited at least ``min_pois`` distinct spots.

    Vocabularies are rebuilt from the surviving records, so the operation
    is idempotent.
    """
    if min_pois < 1:
        raise CorpusError("min_pois must be >= 1")
    distinct: dict[int, set[int]] = {}
    for rec in corpus.records:
        distinct.setdefault(rec.user_idx, set()).add(rec.spot_idx)
    keep = {u for u, spots in distinct.items() if len(spots) >= min_pois}
    survivors = [
        TouristRecord(
            user_id=corpus.users[rec.user_idx],
            spot_id=corpus.spots[rec.spot_idx],
            timestamp=rec.timestamp,
            words=tuple(corpus.words[w] for w in rec.word_idxs),
        )
        for rec in corpus.records
        if rec.user_idx in keep
    ]
    if not survivors:
        raise CorpusError("no users survive filter")
    return from_records(survivors)


def _subcorpus(corpus: Corpus, records: Sequence[IndexedRecord]) -> Corpus:
    # Shares the parent vocabularies so held-out items stay representable.
    return Corpus(
        records=tuple(records),
        users=corpus.users,
        spots=corpus.spots,
        words=corpus.words,
        num_time_slots=corpus.num_time_slots,
    )


def time_split(corpus: Corpus, ratio: float, seed: int = 0) -> SplitResult:
    """Per user, earliest records go to train, the remainder to test.

    Each user's records are ordered by timestamp (input order breaks
    ties); the first ceil(ratio * n) form the train side, capped so a
    user with two or more records appears on both sides. The seed is
    accepted for interface symmetry with user_split but unused: the
    prefix rule is deterministic.
    """
    if not 0.0 < ratio < 1.0:
        raise CorpusError(f"split ratio must be in (0, 1), got {ratio}")
    train: list[IndexedRecord] = []
    test: list[IndexedRecord] = []
    for _, recs in sorted(corpus.records_by_user().items()):
        ordered = sorted(recs, key=lambda r: r.timestamp)
        n_train = math.ceil(ratio * len(ordered))
        if len(ordered) >= 2:
            n_train = min(n_train, len(ordered) - 1)
        train.extend(ordered[:n_train])
        test.extend(ordered[n_train:])
    return SplitResult(
        train=_subcorpus(corpus, train),
        test=_subcorpus(corpus, test),
        mode="time",
        ratio=ratio,
    )


def user_split(corpus: Corpus, ratio: float, seed: int = 0) -> SplitResult:
    """Partition users: a seeded shuffle assigns whole users to train/test."""
    if not 0.0 < ratio < 1.0:
        raise CorpusError(f"split ratio must be in (0, 1), got {ratio}")
    by_user = corpus.records_by_user()
    user_ids = sorted(by_user)
    if len(user_ids) < 2:
        raise CorpusError("user_split requires at least 2 users")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(user_ids))
    n_train = min(math.ceil(ratio * len(user_ids)), len(user_ids) - 1)
    train_users = {user_ids[i] for i in order[:n_train]}
    train = [r for r in corpus.records if r.user_idx in train_users]
    test = [r for r in corpus.records if r.user_idx not in train_users]
    return SplitResult(
        train=_subcorpus(corpus, train),
        test=_subcorpus(corpus, test),
        mode="user",
        ratio=ratio,
    )
