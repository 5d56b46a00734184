"""Temporal knowledge graph core: vocabularies, quadruple storage,
temporal splits, snapshot views, and neighborhood queries.

Facts are quadruples (s, r, o, t) of dense integer ids. Timestamps are
day-granular: every calendar day between the first and last event date
gets an id, so id arithmetic equals day arithmetic. Duplicate rows are
preserved as multiset members.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or out-of-contract input data."""


class Quadruple(NamedTuple):
    s: int
    r: int
    o: int
    t: int


@dataclass
class Vocab:
    """Dense id <-> label tables for entities, relations, timestamps."""

    entity_names: list[str] = field(default_factory=list)
    relation_names: list[str] = field(default_factory=list)
    timestamp_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._entity_ids = {n: i for i, n in enumerate(self.entity_names)}
        self._relation_ids = {n: i for i, n in enumerate(self.relation_names)}
        self._timestamp_ids = {n: i for i, n in enumerate(self.timestamp_labels)}
        if len(self._entity_ids) != len(self.entity_names):
            raise DataError("duplicate entity names")
        if len(self._relation_ids) != len(self.relation_names):
            raise DataError("duplicate relation names")
        labels = self.timestamp_labels
        if any(labels[i] >= labels[i + 1] for i in range(len(labels) - 1)):
            raise DataError("timestamp labels not strictly increasing")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def n_timestamps(self) -> int:
        return len(self.timestamp_labels)

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        return self._relation_ids[name]

    def timestamp_id(self, label: str) -> int:
        return self._timestamp_ids[label]


@dataclass(frozen=True)
class SplitBoundaries:
    """Half-open train/valid intervals, closed test interval.

    train = [t0, t1), valid = [t1, t2), test = [t2, t3].
    """

    t0: int
    t1: int
    t2: int
    t3: int

    def __post_init__(self):
        if not (self.t0 < self.t1 < self.t2 <= self.t3):
            raise DataError(
                f"boundaries must satisfy t0 < t1 < t2 <= t3, "
                f"got ({self.t0}, {self.t1}, {self.t2}, {self.t3})")


class TemporalKG:
    """Immutable multiset of quadruples with an index by timestamp.

    Quads are stored sorted by t then (s, r, o); `snapshot_offsets` is a
    CSR-style offset table so snapshot(t) is a contiguous slice.
    """

    def __init__(self, vocab: Vocab, quads: np.ndarray):
        quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
        if quads.size:
            if quads.min() < 0:
                raise DataError("negative id in quadruples")
            if quads[:, 0].max() >= vocab.n_entities or quads[:, 2].max() >= vocab.n_entities:
                raise DataError("entity id out of vocab bounds")
            if quads[:, 1].max() >= vocab.n_relations:
                raise DataError("relation id out of vocab bounds")
            if quads[:, 3].max() >= vocab.n_timestamps:
                raise DataError("timestamp id out of vocab bounds")
        order = np.lexsort((quads[:, 2], quads[:, 1], quads[:, 0], quads[:, 3]))
        self.vocab = vocab
        self.quads = quads[order]
        self.quads.setflags(write=False)
        counts = np.bincount(self.quads[:, 3], minlength=vocab.n_timestamps)
        self.snapshot_offsets = np.concatenate([[0], np.cumsum(counts)])

    @property
    def n_facts(self) -> int:
        return self.quads.shape[0]

    def snapshot(self, t: int) -> np.ndarray:
        """All quads with timestamp exactly t, as an (m, 4) array."""
        if t < 0 or t >= self.vocab.n_timestamps:
            raise DataError(f"timestamp {t} not indexed (0..{self.vocab.n_timestamps - 1})")
        lo, hi = self.snapshot_offsets[t], self.snapshot_offsets[t + 1]
        return self.quads[lo:hi]

    def restrict(self, lo: int, hi: int) -> "TemporalKG":
        """Sub-KG with quads whose timestamp lies in [lo, hi], same vocab."""
        mask = (self.quads[:, 3] >= lo) & (self.quads[:, 3] <= hi)
        return TemporalKG(self.vocab, self.quads[mask])

    def restrict_before(self, t: int) -> "TemporalKG":
        """Sub-KG with quads strictly before t, same vocab."""
        return TemporalKG(self.vocab, self.quads[self.quads[:, 3] < t])

    def max_timestamp(self) -> int:
        """Largest timestamp carrying a fact, or -1 if empty."""
        return int(self.quads[:, 3].max()) if self.n_facts else -1

    def __eq__(self, other) -> bool:
        if not isinstance(other, TemporalKG):
            return NotImplemented
        return (self.vocab.entity_names == other.vocab.entity_names
                and self.vocab.relation_names == other.vocab.relation_names
                and self.vocab.timestamp_labels == other.vocab.timestamp_labels
                and np.array_equal(self.quads, other.quads))


def _parse_date(text: str, row_no: int) -> _dt.date:
    try:
        return _dt.date.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"row {row_no}: bad date {text!r}: {exc}") from None


def ingest_events(
    event_rows: Iterable[str],
    date_range: tuple[str, str] | None = None,
) -> tuple[Vocab, TemporalKG]:
    """Build (Vocab, TemporalKG) from tab-separated event records.

    Each row is `source<TAB>relation_text<TAB>target<TAB>YYYY-MM-DD`.
    Entity and relation ids are assigned in first-seen order; timestamp
    ids cover every day of `date_range` (or of the observed span) so
    they stay dense and day-granular. Duplicate rows are kept.
    """
    declared = None
    if date_range is not None:
        declared = (_parse_date(date_range[0], 0), _parse_date(date_range[1], 0))
        if declared[0] > declared[1]:
            raise DataError(f"declared range {date_range} is reversed")

    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    parsed: list[tuple[int, int, int, _dt.date]] = []
    for row_no, raw in enumerate(event_rows, start=1):
        line = raw.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4 or any(p == "" for p in parts):
            raise DataError(f"row {row_no}: expected 4 non-empty tab-separated "
                            f"fields, got {parts!r}")
        src, rel, tgt, date_text = parts
        date = _parse_date(date_text, row_no)
        if declared and not (declared[0] <= date <= declared[1]):
            raise DataError(f"row {row_no}: date {date_text} outside declared "
                            f"range {date_range}")
        s = entities.setdefault(src, len(entities))
        r = relations.setdefault(rel, len(relations))
        o = entities.setdefault(tgt, len(entities))
        parsed.append((s, r, o, date))

    if declared:
        start, end = declared
    elif parsed:
        start = min(p[3] for p in parsed)
        end = max(p[3] for p in parsed)
    else:
        vocab = Vocab([], [], [])
        return vocab, TemporalKG(vocab, np.empty((0, 4), dtype=np.int64))

    n_days = (end - start).days + 1
    labels = [(start + _dt.timedelta(days=i)).isoformat() for i in range(n_days)]
    vocab = Vocab(list(entities), list(relations), labels)
    quads = np.array(
        [(s, r, o, (date - start).days) for s, r, o, date in parsed],
        dtype=np.int64,
    ).reshape(-1, 4)
    return vocab, TemporalKG(vocab, quads)


def split(kg: TemporalKG, b: SplitBoundaries) -> tuple[TemporalKG, TemporalKG, TemporalKG]:
    """Partition into train [t0,t1), valid [t1,t2), test [t2,t3]."""
    t = kg.quads[:, 3]
    outside = kg.quads[(t < b.t0) | (t > b.t3)]
    if outside.size:
        sample = [tuple(int(x) for x in q) for q in outside[:5]]
        raise DataError(
            f"{outside.shape[0]} quads outside [{b.t0}, {b.t3}], e.g. {sample}")
    train = TemporalKG(kg.vocab, kg.quads[(t >= b.t0) & (t < b.t1)])
    valid = TemporalKG(kg.vocab, kg.quads[(t >= b.t1) & (t < b.t2)])
    test = TemporalKG(kg.vocab, kg.quads[(t >= b.t2) & (t <= b.t3)])
    return train, valid, test


def incoming_neighbors(kg: TemporalKG, e: int, t: int) -> list[tuple[int, int]]:
    """Distinct (source entity, relation) pairs of edges into e at t, sorted."""
    snap = kg.snapshot(t)
    edges = snap[snap[:, 2] == e]
    return sorted({(int(s), int(r)) for s, r, _, _ in edges})


def save_kg(kg: TemporalKG, directory: str | Path) -> None:
    """Write quads.tsv plus entities/relations/timestamps id->label maps."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "quads.tsv", "w", encoding="utf-8") as f:
        for s, r, o, t in kg.quads:
            f.write(f"{s}\t{r}\t{o}\t{t}\n")
    _write_labels(directory / "entities.tsv", kg.vocab.entity_names)
    _write_labels(directory / "relations.tsv", kg.vocab.relation_names)
    _write_labels(directory / "timestamps.tsv", kg.vocab.timestamp_labels)


def load_kg(directory: str | Path) -> TemporalKG:
    directory = Path(directory)
    vocab = Vocab(
        _read_labels(directory / "entities.tsv"),
        _read_labels(directory / "relations.tsv"),
        _read_labels(directory / "timestamps.tsv"),
    )
    rows = []
    with open(directory / "quads.tsv", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append([int(x) for x in line.split("\t")])
    quads = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return TemporalKG(vocab, quads)


def _write_labels(path: Path, labels: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, name in enumerate(labels):
            f.write(f"{i}\t{name}\n")


def _read_labels(path: Path) -> list[str]:
    labels = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            idx, name = line.split("\t", 1)
            if int(idx) != i:
                raise DataError(f"{path}: non-dense id {idx} at line {i}")
            labels.append(name)
    return labels
