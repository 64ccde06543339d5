from collections import Counter

import numpy as np
import pytest
from scipy import stats

from spurious_rem import simulate
from spurious_rem.netstats import HistoryState, StatisticSpec, apply_event
from spurious_rem.ppois import ModelSpec
from spurious_rem.simulate import (
    GenerationError,
    GeneratorSpec,
    constant_rate_spec,
    dg_spec,
    generate,
    interevent_check,
    realized_pfe,
    total_rate,
)

EMPTY = ModelSpec((), baseline=False)


def within_3se(values, mean):
    values = np.asarray(values, dtype=float)
    return abs(values.mean() - mean) <= 3 * values.std(ddof=1) / np.sqrt(len(values))


def test_equal_rates_pick_dyads_uniformly():
    stream = generate(GeneratorSpec(3, EMPTY, (0.0,), true_events=10_000), np.random.default_rng(0))
    counts = Counter(e.dyad for e in stream.events)
    assert len(counts) == 3
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 3) <= 3 * np.sqrt(2 / 9 / 10_000)


def test_equal_components_split_half():
    stream = generate(constant_rate_spec(2, 0.0, 10_000.0, log_spurious=0.0), np.random.default_rng(1))
    n = len(stream)
    assert abs(stream.labels.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_waiting_times_exponential():
    spec = constant_rate_spec(2, 0.0, 10_000.0)
    assert total_rate(spec) == 1.0
    rng = np.random.default_rng(2)
    pvalues = [interevent_check(spec, rng).pvalue for _ in range(20)]
    assert np.mean(np.array(pvalues) > 0.01) >= 0.95


def test_doubling_rate_halves_waits():
    rng = np.random.default_rng(3)
    slow = np.diff(generate(constant_rate_spec(2, 0.0, 5000.0), rng).times)
    fast = np.diff(generate(constant_rate_spec(2, np.log(2.0), 5000.0), rng).times)
    ratio = fast.mean() / slow.mean()
    se = ratio * np.hypot(fast.std() / fast.mean() / np.sqrt(len(fast)), slow.std() / slow.mean() / np.sqrt(len(slow)))
    assert abs(ratio - 0.5) <= 3 * se


def test_single_dyad_count_is_poisson():
    rng = np.random.default_rng(4)
    lam, T = np.exp(0.7), 25.0
    counts = [len(generate(constant_rate_spec(2, 0.7, T), rng)) for _ in range(300)]
    assert within_3se(counts, lam * T)
    # variance equals the mean for a Poisson count
    assert np.var(counts, ddof=1) / (lam * T) == pytest.approx(1.0, abs=0.25)


def test_thinning_consistency():
    # merged (lambda_0, lambda_1) versus lambda_0 + lambda_1 with independent labelling
    a, b, n_actors, T = -0.5, 0.3, 4, 5.0
    p_true = np.exp(b) / (np.exp(a) + np.exp(b))
    rng = np.random.default_rng(5)
    merged, thinned = [], []
    for _ in range(200):
        s = generate(constant_rate_spec(n_actors, b, T, log_spurious=a), rng)
        merged.append((len(s), s.labels.sum()))
        s = generate(constant_rate_spec(n_actors, np.log(np.exp(a) + np.exp(b)), T), rng)
        thinned.append((len(s), rng.binomial(len(s), p_true)))
    merged, thinned = np.array(merged), np.array(thinned)
    assert stats.ks_2samp(merged[:, 0], thinned[:, 0]).pvalue > 0.001
    assert stats.ks_2samp(merged[:, 1], thinned[:, 1]).pvalue > 0.001
    assert abs(merged[:, 1].sum() / merged[:, 0].sum() - p_true) <= 3 * np.sqrt(p_true * (1 - p_true) / merged[:, 0].sum())


def test_labels_are_ground_truth(monkeypatch):
    states = []

    class Recording(HistoryState):
        def __init__(self, *args, **kw):
            super().__init__(*args, **kw)
            states.append(self)

    monkeypatch.setattr(simulate, "HistoryState", Recording)
    stream = generate(dg_spec(1, n_actors=12, true_events=150), np.random.default_rng(6))
    true_state, spurious_state = states
    replay = HistoryState(stream.actors)
    for e, z in zip(stream.events, stream.labels):
        if z == 1:
            apply_event(replay, e.dyad)
    assert replay.pair_counts == true_state.pair_counts
    assert replay.degrees == true_state.degrees
    np.testing.assert_array_equal(replay.shared, true_state.shared)
    assert spurious_state.n_events == int(np.sum(stream.labels == 0))
    assert int(stream.labels.sum()) == 150


def test_dg1_spurious_fraction():
    # averaged over replications at n = 40, 500 true events the realized share is about 4.8%
    values = [realized_pfe(generate(dg_spec(1), np.random.default_rng(seed))) for seed in range(40)]
    assert within_3se(values, 4.819)


def test_dg2_has_no_spurious_events():
    stream = generate(dg_spec(2, n_actors=20, true_events=300), np.random.default_rng(7))
    assert len(stream) == 300 and realized_pfe(stream) == 0.0


def test_covariates_drawn_per_recipe():
    stream = generate(dg_spec(1, n_actors=200, true_events=5), np.random.default_rng(8))
    x = stream.actors.continuous_array("cont")
    assert stats.kstest(x, "norm").pvalue > 0.001
    codes = set(stream.actors.categorical["cat"].values())
    assert codes <= {str(k) for k in range(7)} and len(codes) == 7


def test_same_seed_same_stream():
    spec = dg_spec(1, n_actors=10, true_events=60)
    a = generate(spec, np.random.default_rng(9))
    b = generate(spec, np.random.default_rng(9))
    assert a.events == b.events and a.actors.continuous == b.actors.continuous


def test_dg_statistics_choice():
    assert dg_spec(1).true_model.statistics[3] == StatisticSpec("sim_cont", "cont")
    assert dg_spec(1, continuous="sum_cont").true_model.statistics[3] == StatisticSpec("sum_cont", "cont")
    assert dg_spec(1).spurious_coef == (-2.5,)
    assert dg_spec(2).spurious_model is None
    with pytest.raises(ValueError):
        dg_spec(3)


def test_generation_errors():
    with pytest.raises(GenerationError, match="total rate"):
        generate(constant_rate_spec(3, -np.inf, 1.0), np.random.default_rng(0))
    runaway = GeneratorSpec(3, EMPTY, (-10.0,), EMPTY, (5.0,), true_events=100, max_events=50)
    with pytest.raises(GenerationError, match="exceeded"):
        generate(runaway, np.random.default_rng(0))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_actors=1, true_model=EMPTY, true_coef=(0.0,), true_events=5),
        dict(n_actors=3, true_model=EMPTY, true_coef=(0.0,)),
        dict(n_actors=3, true_model=EMPTY, true_coef=(0.0,), true_events=5, horizon=1.0),
        dict(n_actors=3, true_model=EMPTY, true_coef=(0.0,), true_events=0),
        dict(n_actors=3, true_model=EMPTY, true_coef=(0.0, 1.0), true_events=5),
        dict(n_actors=3, true_model=EMPTY, true_coef=(0.0,), spurious_coef=(1.0,), true_events=5),
        dict(n_actors=3, true_model=ModelSpec(()), true_coef=(0.0,), true_events=5),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        GeneratorSpec(**kwargs)


def test_total_rate_needs_constant_spec():
    with pytest.raises(ValueError):
        total_rate(dg_spec(1))
    assert total_rate(constant_rate_spec(4, 0.0, 1.0, log_spurious=np.log(2.0))) == pytest.approx(18.0)
