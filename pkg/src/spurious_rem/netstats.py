"""Endogenous and exogenous statistics for undirected relational events.

The history is kept in array form so that the statistics of every dyad in
the risk set can be read off with fancy indexing. Triangle counts (shared
past partners) are maintained incrementally: when a dyad ``(a, b)`` sees its
first event, the pairs ``(a, h)`` for every past partner ``h`` of ``b`` gain
one shared partner, and symmetrically for the past partners of ``a``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .events import ActorTable

ENDOGENOUS = ("degree_abs", "repetition_count", "first_repetition", "triangle")
COVARIATE_KINDS = ("sim_cont", "dissim_cont", "sum_cont", "match_cat", "dyadic_network")
KINDS = ENDOGENOUS + COVARIATE_KINDS

DISSIM_EPS = 1e-6
_dissim_warned = False


@dataclass(frozen=True)
class StatisticSpec:
    kind: str
    covariate: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}; expected one of {KINDS}")
        if (self.kind in COVARIATE_KINDS) != (self.covariate is not None):
            if self.covariate is None:
                raise ValueError(f"statistic {self.kind!r} needs a covariate name")
            raise ValueError(f"statistic {self.kind!r} takes no covariate")

    @property
    def endogenous(self) -> bool:
        return self.kind in ENDOGENOUS

    @property
    def name(self) -> str:
        return self.kind if self.covariate is None else f"{self.kind}:{self.covariate}"

    @classmethod
    def parse(cls, obj) -> "StatisticSpec":
        if isinstance(obj, StatisticSpec):
            return obj
        if isinstance(obj, str):
            kind, _, cov = obj.partition(":")
            return cls(kind, cov or None)
        return cls(obj["kind"], obj.get("covariate"))


class HistoryState:
    """Counting-process state ``N(t-)`` of one component.

    Attributes are dense ``n x n`` arrays indexed by actor position in the
    :class:`ActorTable`: ``counts`` (symmetric event counts), ``adj``
    (``counts > 0``), ``shared`` (number of common past partners) and
    ``deg`` (number of distinct past partners).
    """

    def __init__(self, actors: ActorTable):
        n = len(actors)
        self.actors = actors
        self.counts = np.zeros((n, n), dtype=np.int64)
        self.adj = np.zeros((n, n), dtype=np.int64)
        self.shared = np.zeros((n, n), dtype=np.int64)
        self.deg = np.zeros(n, dtype=np.int64)
        self.n_events = 0

    def copy(self) -> "HistoryState":
        new = HistoryState.__new__(HistoryState)
        new.actors = self.actors
        new.counts = self.counts.copy()
        new.adj = self.adj.copy()
        new.shared = self.shared.copy()
        new.deg = self.deg.copy()
        new.n_events = self.n_events
        return new

    def apply_index(self, i: int, j: int) -> None:
        if self.counts[i, j] == 0:
            ai, aj = self.adj[i].copy(), self.adj[j].copy()
            self.shared[i, :] += aj
            self.shared[:, i] += aj
            self.shared[j, :] += ai
            self.shared[:, j] += ai
            self.adj[i, j] = self.adj[j, i] = 1
            self.deg[i] += 1
            self.deg[j] += 1
        self.counts[i, j] += 1
        self.counts[j, i] += 1
        self.n_events += 1

    @property
    def pair_counts(self) -> dict[tuple[str, str], int]:
        ids = self.actors.ids
        ii, jj = np.nonzero(np.triu(self.counts))
        return {(ids[i], ids[j]): int(self.counts[i, j]) for i, j in zip(ii, jj)}

    @property
    def degrees(self) -> dict[str, int]:
        return {a: int(d) for a, d in zip(self.actors.ids, self.deg)}

    @property
    def adjacency(self) -> dict[str, set[str]]:
        ids = self.actors.ids
        return {a: {ids[j] for j in np.flatnonzero(self.adj[i])} for i, a in enumerate(ids)}


def apply_event(state: HistoryState, dyad: tuple[str, str]) -> HistoryState:
    """Record one event on ``dyad`` (in place) and return the state."""
    idx = state.actors.index
    state.apply_index(idx[dyad[0]], idx[dyad[1]])
    return state


def _dissim(diff):
    global _dissim_warned
    diff = np.abs(diff)
    if np.any(diff < DISSIM_EPS):
        if not _dissim_warned:
            warnings.warn("dissim_cont: zero covariate difference, denominator clamped at 1e-6", RuntimeWarning)
            _dissim_warned = True
        diff = np.maximum(diff, DISSIM_EPS)
    return 1.0 / diff


def exogenous_values(spec: StatisticSpec, actors: ActorTable, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
    """Vectorized time-constant statistic for the dyads ``(ia[k], ib[k])``."""
    kind = spec.kind
    if kind == "match_cat":
        codes = actors.categorical_codes(spec.covariate)
        return (codes[ia] == codes[ib]).astype(float)
    if kind == "dyadic_network":
        return actors.dyadic_matrix(spec.covariate)[ia, ib]
    x = actors.continuous_array(spec.covariate)
    if kind == "sim_cont":
        return np.abs(x[ia] - x[ib])
    if kind == "dissim_cont":
        return _dissim(x[ia] - x[ib])
    if kind == "sum_cont":
        return x[ia] + x[ib]
    raise ValueError(f"{kind!r} is not an exogenous statistic")


def endogenous_values(spec: StatisticSpec, state: HistoryState, ia, ib) -> np.ndarray:
    kind = spec.kind
    if kind == "degree_abs":
        return np.abs(state.deg[ia] - state.deg[ib]).astype(float)
    if kind == "repetition_count":
        return state.counts[ia, ib].astype(float)
    if kind == "first_repetition":
        return state.adj[ia, ib].astype(float)
    if kind == "triangle":
        return state.shared[ia, ib].astype(float)
    raise ValueError(f"{kind!r} is not an endogenous statistic")


def stat_value(spec: StatisticSpec, state: HistoryState, actors: ActorTable, dyad: tuple[str, str]) -> float:
    idx = actors.index
    ia = np.array([idx[dyad[0]]])
    ib = np.array([idx[dyad[1]]])
    if spec.endogenous:
        return float(endogenous_values(spec, state, ia, ib)[0])
    return float(exogenous_values(spec, actors, ia, ib)[0])


def stat_row(specs: Sequence[StatisticSpec], state: HistoryState, actors: ActorTable, dyad) -> np.ndarray:
    return np.array([stat_value(s, state, actors, dyad) for s in specs], dtype=float)


class StatMatrix:
    """Statistics of a fixed list of dyads, with exogenous columns cached.

    Calling the object with a :class:`HistoryState` returns the
    ``(len(ia), len(specs))`` statistic block for that history.
    """

    def __init__(self, specs: Sequence[StatisticSpec], actors: ActorTable, ia, ib):
        self.specs = tuple(specs)
        self.ia = np.asarray(ia, dtype=np.int64)
        self.ib = np.asarray(ib, dtype=np.int64)
        self.static = np.zeros((len(self.ia), len(self.specs)))
        self.dynamic = [k for k, s in enumerate(self.specs) if s.endogenous]
        for k, s in enumerate(self.specs):
            if not s.endogenous:
                self.static[:, k] = exogenous_values(s, actors, self.ia, self.ib)

    def __call__(self, state: HistoryState) -> np.ndarray:
        out = self.static.copy()
        for k in self.dynamic:
            out[:, k] = endogenous_values(self.specs[k], state, self.ia, self.ib)
        return out


def literal_stat(spec: StatisticSpec, directed_counts: np.ndarray, actors: ActorTable, i: int, j: int) -> float:
    """Reference evaluation from a directed count matrix ``N[a, h]``.

    Uses the written-out sums over all actors ``h`` with both storage
    directions, so it also holds when only one cell per dyad is filled.
    """
    N = directed_counts
    pos = N > 0
    n = N.shape[0]
    if spec.kind == "degree_abs":
        da = sum(int(pos[i, h]) + int(pos[h, i]) for h in range(n))
        db = sum(int(pos[j, h]) + int(pos[h, j]) for h in range(n))
        return float(abs(da - db))
    if spec.kind == "repetition_count":
        return float(N[i, j] + N[j, i])
    if spec.kind == "first_repetition":
        return float(N[i, j] + N[j, i] > 0)
    if spec.kind == "triangle":
        return float(
            sum(
                pos[i, h] * pos[j, h] + pos[h, i] * pos[j, h] + pos[i, h] * pos[h, j] + pos[h, i] * pos[h, j]
                for h in range(n)
            )
        )
    return float(exogenous_values(spec, actors, np.array([i]), np.array([j]))[0])
