import sys

import numpy as np
import pytest

from spurious_rem.events import ActorTable, Event, EventStream
from spurious_rem.ppois import ModelSpec
from spurious_rem.simulate import dg_spec, generate


def inhomogeneous_stream(log_rate, horizon, rng, n_actors=2):
    """Events of a single time-varying rate shared by all dyads, by thinning."""
    ids = tuple(f"p{k}" for k in range(n_actors))
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    grid = np.linspace(0, horizon, 2001)
    bound = np.exp(log_rate(grid)).max() * 1.01 * len(pairs)
    t, events = 0.0, []
    while True:
        t += rng.exponential(1 / bound)
        if t > horizon:
            break
        if rng.random() * bound < np.exp(log_rate(t)) * len(pairs):
            a, b = pairs[rng.integers(len(pairs))]
            events.append(Event(a, b, t))
    return EventStream(tuple(events), horizon, ActorTable(ids))


@pytest.fixture(scope="session")
def small_dg1():
    """A small labeled DG1 stream (12 actors, 80 true events) and its models."""
    spec = dg_spec(1, n_actors=12, true_events=80)
    stream = generate(spec, np.random.default_rng(11))
    return stream, ModelSpec(spec.true_model.statistics), ModelSpec((), baseline=False)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
