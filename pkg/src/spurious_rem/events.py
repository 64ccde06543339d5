"""Event streams, actor tables, risk sets and CSV ingestion.

Events are undirected: ``(a, b, t)`` and ``(b, a, t)`` describe the same
interaction, so every event is stored with ``actor_a < actor_b`` under the
ordinary string order of actor ids.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LABELS = {"1": 1, "0": 0, "true": 1, "spurious": 0, "": None}

DEFAULT_SCHEMA = {"time": "time", "actor_a": "actor_a", "actor_b": "actor_b", "label": "label"}


class IngestionError(ValueError):
    """Raised when an input file cannot be turned into a valid object."""


@dataclass(frozen=True)
class Event:
    actor_a: str
    actor_b: str
    time: float
    label: int | None = None

    def __post_init__(self):
        if self.actor_a == self.actor_b:
            raise ValueError(f"self-loop event for actor {self.actor_a!r}")
        if not self.time >= 0:
            raise ValueError(f"event time must be nonnegative, got {self.time}")
        if self.label not in (None, 0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")

    @property
    def dyad(self) -> tuple[str, str]:
        return (self.actor_a, self.actor_b)

    def canonical(self) -> "Event":
        if self.actor_a < self.actor_b:
            return self
        return Event(self.actor_b, self.actor_a, self.time, self.label)


def canonical_dyad(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class ActorTable:
    """Actor universe with actor-level and dyadic covariates.

    Categorical values are kept as strings; continuous values as floats.
    Dyadic lookups are symmetrized on read.
    """

    ids: tuple[str, ...]
    continuous: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    categorical: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    dyadic: Mapping[str, Mapping[tuple[str, str], float]] = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(sorted(set(self.ids)))
        if len(ids) != len(self.ids) or ids != tuple(self.ids):
            object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(ids)})
        for kind, table in (("continuous", self.continuous), ("categorical", self.categorical)):
            for name, values in table.items():
                missing = [a for a in ids if a not in values]
                if missing:
                    raise ValueError(f"{kind} covariate {name!r} missing for actors {missing}")

    def __len__(self):
        return len(self.ids)

    @property
    def index(self) -> Mapping[str, int]:
        return self._index

    def dyadic_value(self, name: str, a: str, b: str) -> float:
        raw = self.dyadic[name]
        return 0.5 * (raw.get((a, b), 0.0) + raw.get((b, a), 0.0))

    def continuous_array(self, name: str) -> np.ndarray:
        if name not in self.continuous:
            raise KeyError(f"unknown continuous covariate {name!r}")
        values = self.continuous[name]
        return np.array([values[a] for a in self.ids], dtype=float)

    def categorical_codes(self, name: str) -> np.ndarray:
        if name not in self.categorical:
            raise KeyError(f"unknown categorical covariate {name!r}")
        values = self.categorical[name]
        levels = {v: k for k, v in enumerate(sorted(set(values.values())))}
        return np.array([levels[values[a]] for a in self.ids], dtype=np.int64)

    def dyadic_matrix(self, name: str) -> np.ndarray:
        if name not in self.dyadic:
            raise KeyError(f"unknown dyadic covariate {name!r}")
        n = len(self.ids)
        raw = np.zeros((n, n))
        for (a, b), v in self.dyadic[name].items():
            raw[self._index[a], self._index[b]] = v
        return 0.5 * (raw + raw.T)

    def with_covariates(self, continuous=None, categorical=None, dyadic=None) -> "ActorTable":
        return ActorTable(
            self.ids,
            {**self.continuous, **(continuous or {})},
            {**self.categorical, **(categorical or {})},
            {**self.dyadic, **(dyadic or {})},
        )


@dataclass(frozen=True)
class RiskSet:
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        canon = tuple(sorted({canonical_dyad(a, b) for a, b in self.pairs}))
        if any(a == b for a, b in canon):
            raise ValueError("risk set contains a self-loop")
        object.__setattr__(self, "pairs", canon)

    @classmethod
    def all_pairs(cls, actors: ActorTable) -> "RiskSet":
        return cls(tuple(combinations(actors.ids, 2)))

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, dyad):
        return canonical_dyad(*dyad) in self._lookup

    @property
    def _lookup(self):
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {p: k for k, p in enumerate(self.pairs)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def position(self, dyad: tuple[str, str]) -> int:
        return self._lookup[canonical_dyad(*dyad)]

    def index_arrays(self, actors: ActorTable) -> tuple[np.ndarray, np.ndarray]:
        idx = actors.index
        ia = np.array([idx[a] for a, _ in self.pairs], dtype=np.int64)
        ib = np.array([idx[b] for _, b in self.pairs], dtype=np.int64)
        return ia, ib


def risk_set_size(rs: RiskSet) -> int:
    return len(rs)


@dataclass(frozen=True)
class EventStream:
    events: tuple[Event, ...]
    horizon: float
    actors: ActorTable

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(e.canonical() for e in self.events))
        times = self.times
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if len(times) and times[-1] > self.horizon:
            raise ValueError("event after horizon")
        known = set(self.actors.ids)
        for e in self.events:
            if e.actor_a not in known or e.actor_b not in known:
                raise ValueError(f"event {e} references an unknown actor")

    def __len__(self):
        return len(self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events], dtype=float)

    @property
    def labels(self) -> np.ndarray | None:
        """Ground-truth labels, or ``None`` if any event is unlabeled."""
        if not self.events or any(e.label is None for e in self.events):
            return None
        return np.array([e.label for e in self.events], dtype=np.int8)

    def dyad_indices(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self.actors.index
        ia = np.array([idx[e.actor_a] for e in self.events], dtype=np.int64)
        ib = np.array([idx[e.actor_b] for e in self.events], dtype=np.int64)
        return ia, ib

    def with_actors(self, actors: ActorTable) -> "EventStream":
        return EventStream(self.events, self.horizon, actors)


def _jitter_ties(times: np.ndarray) -> tuple[np.ndarray, int]:
    """Shift the k-th repeat of a tied time by k * eps, preserving input order.

    Within a tie group eps shrinks if needed so the group stays below the
    next distinct time.
    """
    if len(times) < 2:
        return times, 0
    span = times[-1] - times[0]
    eps = 1e-9 * (span / (len(times) - 1) if span > 0 else 1.0)
    out = times.copy()
    n_tied = 0
    start = 0
    while start < len(times):
        end = start
        while end + 1 < len(times) and times[end + 1] == times[start]:
            end += 1
        size = end - start
        if size:
            step = eps
            if end + 1 < len(times):
                step = min(step, (times[end + 1] - times[start]) / (size + 1))
            out[start + 1:end + 1] = times[start] + step * np.arange(1, size + 1)
            n_tied += size
        start = end + 1
    return out, n_tied


def build_stream(
    events: Sequence[Event],
    actors: ActorTable | None = None,
    horizon: float | None = None,
    jitter_ties: bool = True,
) -> EventStream:
    """Canonicalize, sort (stable) and tie-break a list of events."""
    canon = sorted((e.canonical() for e in events), key=lambda e: e.time)
    times = np.array([e.time for e in canon], dtype=float)
    if len(times) > 1 and np.any(np.diff(times) == 0):
        if not jitter_ties:
            m = int(np.flatnonzero(np.diff(times) == 0)[0]) + 1
            raise IngestionError(f"tied event times at {times[m]} and tie-breaking is disabled")
        times, n_tied = _jitter_ties(times)
        if np.any(np.diff(times) <= 0):
            raise IngestionError("tie jitter could not separate event times")
        logger.warning("jittered %d tied event times", n_tied)
        canon = [Event(e.actor_a, e.actor_b, float(t), e.label) for e, t in zip(canon, times)]
    if actors is None:
        actors = ActorTable(tuple(sorted({a for e in canon for a in e.dyad})))
    if horizon is None:
        horizon = float(times[-1]) if len(times) else 0.0
    return EventStream(tuple(canon), float(horizon), actors)


def ingest_events(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    horizon: float | None = None,
    jitter_ties: bool = True,
) -> EventStream:
    """Read an events CSV with columns ``time,actor_a,actor_b[,label]``.

    ``schema`` maps the logical names (``time``, ``actor_a``, ``actor_b``,
    ``label``) to column names in the file. Row numbers in error messages
    count the header as row 1.
    """
    cols = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"events file not found: {path}")
    events = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("time", "actor_a", "actor_b"):
            if cols[key] not in header:
                raise IngestionError(f"{path}: missing column {cols[key]!r}")
        has_label = cols["label"] in header
        for row_no, row in enumerate(reader, start=2):
            try:
                t = float(row[cols["time"]])
                a = row[cols["actor_a"]].strip()
                b = row[cols["actor_b"]].strip()
                label = LABELS[row[cols["label"]].strip().lower()] if has_label else None
            except (TypeError, ValueError, KeyError, AttributeError) as exc:
                raise IngestionError(f"{path}: malformed row {row_no}: {exc}") from None
            if not math.isfinite(t):
                raise IngestionError(f"{path}: row {row_no}: non-finite time")
            if t < 0:
                raise IngestionError(f"{path}: row {row_no}: negative time {t}")
            if not a or not b:
                raise IngestionError(f"{path}: row {row_no}: empty actor id")
            if a == b:
                raise IngestionError(f"{path}: row {row_no}: self-loop event for actor {a!r}")
            events.append(Event(a, b, t, label))
    return build_stream(events, horizon=horizon, jitter_ties=jitter_ties)


def ingest_covariates(
    path: str | Path,
    actors: ActorTable,
    categorical: Iterable[str] = (),
    continuous: Iterable[str] | None = None,
) -> ActorTable:
    """Read ``actor,<name1>,...`` and attach the columns to ``actors``.

    Columns listed in ``categorical`` are kept as category labels; all other
    columns (or only those in ``continuous``, if given) must be numeric.
    Actors present only in the covariate file join the actor universe.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"covariate file not found: {path}")
    categorical = set(categorical)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "actor" not in header:
            raise IngestionError(f"{path}: missing column 'actor'")
        names = [h for h in header if h != "actor"]
        unknown = categorical - set(names)
        if unknown:
            raise IngestionError(f"{path}: declared categorical columns not found: {sorted(unknown)}")
        if continuous is not None:
            names = [h for h in names if h in set(continuous) or h in categorical]
        cont = {h: {} for h in names if h not in categorical}
        cat = {h: {} for h in names if h in categorical}
        seen = set()
        for row_no, row in enumerate(reader, start=2):
            actor = (row["actor"] or "").strip()
            if not actor:
                raise IngestionError(f"{path}: row {row_no}: empty actor id")
            if actor in seen:
                raise IngestionError(f"{path}: row {row_no}: duplicate actor {actor!r}")
            seen.add(actor)
            for h in cat:
                cat[h][actor] = (row[h] or "").strip()
            for h in cont:
                try:
                    value = float(row[h])
                except (TypeError, ValueError):
                    raise IngestionError(
                        f"{path}: row {row_no}: non-numeric value {row[h]!r} in continuous column {h!r}"
                    ) from None
                if not math.isfinite(value):
                    raise IngestionError(f"{path}: row {row_no}: non-finite value in column {h!r}")
                cont[h][actor] = value
    missing = sorted(set(actors.ids) - seen)
    if missing:
        raise IngestionError(f"{path}: actors missing from covariate file: {missing}")
    ids = tuple(sorted(set(actors.ids) | seen))
    return ActorTable(ids, {**actors.continuous, **cont}, {**actors.categorical, **cat}, dict(actors.dyadic))


def ingest_dyadic(path: str | Path, actors: ActorTable, name: str) -> ActorTable:
    """Read ``actor_a,actor_b,value``; pairs not listed default to 0."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"dyadic covariate file not found: {path}")
    known = set(actors.ids)
    values: dict[tuple[str, str], float] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"actor_a", "actor_b", "value"} <= set(reader.fieldnames or []):
            raise IngestionError(f"{path}: header must be actor_a,actor_b,value")
        for row_no, row in enumerate(reader, start=2):
            a, b = row["actor_a"].strip(), row["actor_b"].strip()
            if a not in known or b not in known:
                raise IngestionError(f"{path}: row {row_no}: unknown actor in ({a!r}, {b!r})")
            try:
                values[(a, b)] = float(row["value"])
            except (TypeError, ValueError):
                raise IngestionError(f"{path}: row {row_no}: non-numeric value {row['value']!r}") from None
    return actors.with_covariates(dyadic={name: values})


def write_events(stream: EventStream, path: str | Path, labels: bool | None = None) -> None:
    """Write ``time,actor_a,actor_b[,label]``; labels are written when all are known."""
    if labels is None:
        labels = stream.labels is not None
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "actor_a", "actor_b"] + (["label"] if labels else []))
        for e in stream.events:
            row = [repr(e.time), e.actor_a, e.actor_b]
            if labels:
                row.append("" if e.label is None else str(e.label))
            writer.writerow(row)


def write_covariates(actors: ActorTable, path: str | Path) -> None:
    names = list(actors.continuous) + list(actors.categorical)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["actor"] + names)
        for a in actors.ids:
            row = [a]
            row += [repr(float(actors.continuous[n][a])) for n in actors.continuous]
            row += [actors.categorical[n][a] for n in actors.categorical]
            writer.writerow(row)
