"""
A miniature simulation study
============================

Ten replications with short chains, enough to see the shape of the
comparison between the ordinary and the augmented model: bias, RMSE and
coverage of 95% intervals per coefficient, and the estimated share of
spurious events. The acceptance suite runs the full desk-scale version
(S = 100, 20 actors, 300 true events, chains of 30 + 30 iterations).
"""

import logging

from spurious_rem import ChainConfig, run_study

logging.disable(logging.WARNING)

result = run_study(1, S=10, scale="desk", seed=0, chain=ChainConfig(burn_in=10, draws=10))
print(result.to_markdown())
