"""
Which process produced an event?
================================

Two independent Poisson processes with rates lam0 and lam1 superpose to a
Poisson process with rate lam0 + lam1, and a jump belongs to the second
with probability lam1 / (lam0 + lam1). The imputation step of the sampler
draws every latent label with exactly this probability, using the
intensities implied by the labels drawn so far.
"""

import numpy as np

from spurious_rem import ActorTable, Event, ModelSpec, SpuriousEventSampler, build_stream

rng = np.random.default_rng(0)
lam0, lam1 = 0.4, 1.5

# direct construction: simulate both streams and attribute the merged jumps
horizon = 20_000.0
n1 = rng.poisson(lam1 * horizon)
n0 = rng.poisson(lam0 * horizon)
print(f"share of jumps from the second stream: {n1 / (n0 + n1):.4f}")
print(f"lam1 / (lam0 + lam1):                  {lam1 / (lam0 + lam1):.4f}")

# the sampler on a single dyad with constant intensities
actors = ActorTable(("a", "b"))
stream = build_stream([Event("a", "b", float(t)) for t in range(1, 20_001)], actors)
constant = ModelSpec((), baseline=False)
sampler = SpuriousEventSampler(stream, constant, constant)
theta = {1: np.log([lam1]), 0: np.log([lam0])}
labels = sampler.istep(theta, rng)
print(f"share labelled true by one sweep:      {labels.mean():.4f}")

# with history-dependent intensities the probability changes along the sweep;
# here a repetition effect makes repeated true events on a dyad less likely
rep = ModelSpec(("repetition_count",), baseline=False)
short = build_stream([Event("a", "b", float(t)) for t in range(1, 9)], actors)
sampler = SpuriousEventSampler(short, rep, constant)
theta = {1: np.array([0.0, -0.7]), 0: np.array([-1.0])}
probs = sampler.acceptance_probabilities(theta, np.ones(8))
print("P(true) along an all-true history:", np.round(probs, 3))
