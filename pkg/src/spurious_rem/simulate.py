"""Exact simulation of labeled event streams from true/spurious intensities.

All intensities are constant between events (statistics change only at
events and the generators use a constant baseline), so the superposed
process is sampled exactly: an exponential waiting time with the total rate,
then one (dyad, component) cell chosen proportionally to its rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .events import ActorTable, Event, EventStream, RiskSet
from .netstats import HistoryState, StatisticSpec, StatMatrix
from .ppois import ModelSpec

DG_STATISTICS = (
    StatisticSpec("degree_abs"),
    StatisticSpec("triangle"),
    StatisticSpec("repetition_count"),
    StatisticSpec("sim_cont", "cont"),
    StatisticSpec("match_cat", "cat"),
)
DG_TRUE_COEF = (-5.0, 0.2, 0.1, -0.5, 2.0, -2.0)
DG1_SPURIOUS_INTERCEPT = -2.5


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """What to simulate.

    ``true_coef`` and ``spurious_coef`` start with the intercept followed by
    one coefficient per statistic of the matching model. A missing spurious
    model means no spurious events. Exactly one of ``true_events`` and
    ``horizon`` is the stopping rule.
    """

    n_actors: int
    true_model: ModelSpec
    true_coef: tuple[float, ...]
    spurious_model: ModelSpec | None = None
    spurious_coef: tuple[float, ...] | None = None
    true_events: int | None = None
    horizon: float | None = None
    n_categories: int = 7
    max_events: int = 10**6
    actors: ActorTable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_actors < 2:
            raise ValueError("need at least two actors")
        if (self.true_events is None) == (self.horizon is None):
            raise ValueError("give exactly one of true_events and horizon")
        if self.true_events is not None and self.true_events <= 0:
            raise ValueError("true_events must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for model, coef, label in (
            (self.true_model, self.true_coef, "true"),
            (self.spurious_model, self.spurious_coef, "spurious"),
        ):
            if model is None:
                if coef is not None:
                    raise ValueError(f"{label} coefficients given without a model")
                continue
            if model.baseline:
                raise ValueError("generators support constant baselines only")
            if coef is None or len(coef) != 1 + len(model.statistics):
                raise ValueError(f"{label} coefficients must have length {1 + len(model.statistics)}")
            if any(s.kind == "dyadic_network" for s in model.statistics) and self.actors is None:
                raise ValueError("dyadic covariates need an explicit actor table")


def dg_statistics(continuous: str = "sim_cont") -> tuple[StatisticSpec, ...]:
    """Design statistics; ``continuous`` picks how the actor covariate enters the dyad."""
    return DG_STATISTICS[:3] + (StatisticSpec(continuous, "cont"),) + DG_STATISTICS[4:]


def dg_spec(dg: int, n_actors: int = 40, true_events: int = 500, continuous: str = "sim_cont") -> GeneratorSpec:
    """The two simulation designs: spurious rate exp(-2.5) (dg=1) or none (dg=2).

    The continuous covariate enters as the absolute difference by default;
    ``continuous="sum_cont"`` uses the sum instead.
    """
    true_model = ModelSpec(dg_statistics(continuous), baseline=False)
    if dg == 1:
        spur = ModelSpec((), baseline=False)
        return GeneratorSpec(n_actors, true_model, DG_TRUE_COEF, spur, (DG1_SPURIOUS_INTERCEPT,), true_events)
    if dg == 2:
        return GeneratorSpec(n_actors, true_model, DG_TRUE_COEF, None, None, true_events)
    raise ValueError(f"unknown data-generating process {dg!r}")


def draw_actors(spec: GeneratorSpec, rng: np.random.Generator) -> ActorTable:
    """Standard-normal continuous and uniform categorical covariates per actor."""
    width = len(str(spec.n_actors - 1))
    ids = tuple(f"a{k:0{width}d}" for k in range(spec.n_actors))
    cont, cat = set(), set()
    for model in (spec.true_model, spec.spurious_model):
        for s in model.statistics if model else ():
            if s.kind == "match_cat":
                cat.add(s.covariate)
            elif s.covariate is not None:
                cont.add(s.covariate)
    continuous = {}
    for name in sorted(cont):
        continuous[name] = dict(zip(ids, map(float, rng.standard_normal(spec.n_actors))))
    categorical = {}
    for name in sorted(cat):
        categorical[name] = dict(zip(ids, map(str, rng.integers(spec.n_categories, size=spec.n_actors))))
    return ActorTable(ids, continuous, categorical)


def generate(spec: GeneratorSpec, rng: np.random.Generator) -> EventStream:
    """Simulate one labeled stream (label 1 = true, 0 = spurious)."""
    actors = spec.actors if spec.actors is not None else draw_actors(spec, rng)
    rs = RiskSet.all_pairs(actors)
    ia, ib = rs.index_arrays(actors)
    R = len(rs)
    true_stats = StatMatrix(spec.true_model.statistics, actors, ia, ib)
    true_coef = np.asarray(spec.true_coef, dtype=float)
    state1 = HistoryState(actors)
    if spec.spurious_model is not None:
        spur_stats = StatMatrix(spec.spurious_model.statistics, actors, ia, ib)
        spur_coef = np.asarray(spec.spurious_coef, dtype=float)
        state0 = HistoryState(actors)
    ids = actors.ids
    events = []
    t = 0.0
    n_true = 0
    rates = np.zeros(2 * R)
    while True:
        rates[R:] = np.exp(true_coef[0] + true_stats(state1) @ true_coef[1:])
        if spec.spurious_model is not None:
            rates[:R] = np.exp(spur_coef[0] + spur_stats(state0) @ spur_coef[1:])
        cum = np.cumsum(rates)
        total = cum[-1]
        if not total > 0 or not np.isfinite(total):
            raise GenerationError(f"total rate is {total} after {len(events)} events")
        t += rng.exponential(1.0 / total)
        if spec.horizon is not None and t > spec.horizon:
            break
        k = min(int(np.searchsorted(cum, rng.random() * total, side="right")), 2 * R - 1)
        label, pos = divmod(k, R)
        i, j = ia[pos], ib[pos]
        events.append(Event(ids[i], ids[j], t, label))
        if label == 1:
            state1.apply_index(i, j)
            n_true += 1
        else:
            state0.apply_index(i, j)
        if spec.true_events is not None and n_true >= spec.true_events:
            break
        if len(events) >= spec.max_events:
            raise GenerationError(f"generation exceeded {spec.max_events} events")
    horizon = spec.horizon if spec.horizon is not None else (events[-1].time if events else 0.0)
    return EventStream(tuple(events), float(horizon), actors)


def realized_pfe(stream: EventStream) -> float:
    """Percentage of spurious events among the labeled events."""
    labels = stream.labels
    if labels is None:
        raise ValueError("stream has no ground-truth labels")
    return 100.0 * float(np.mean(labels == 0))


def constant_rate_spec(n_actors: int, log_rate: float, horizon: float, log_spurious: float | None = None):
    empty = ModelSpec((), baseline=False)
    spur = (empty, (log_spurious,)) if log_spurious is not None else (None, None)
    return GeneratorSpec(n_actors, empty, (log_rate,), spur[0], spur[1], horizon=horizon)


def total_rate(spec: GeneratorSpec) -> float:
    """Sum of all dyadic rates of a spec without statistics."""
    if spec.true_model.statistics or (spec.spurious_model and spec.spurious_model.statistics):
        raise ValueError("total rate is only constant for specs without statistics")
    R = spec.n_actors * (spec.n_actors - 1) // 2
    rate = np.exp(spec.true_coef[0])
    if spec.spurious_model is not None:
        rate += np.exp(spec.spurious_coef[0])
    return float(R * rate)


def interevent_check(spec: GeneratorSpec, rng: np.random.Generator):
    """Kolmogorov-Smirnov test of simulated waiting times against Exp(total rate).

    Returns the :func:`scipy.stats.kstest` result (statistic and p-value).
    """
    stream = generate(spec, rng)
    waits = np.diff(np.concatenate([[0.0], stream.times]))
    return stats.kstest(waits, "expon", args=(0.0, 1.0 / total_rate(spec)))
