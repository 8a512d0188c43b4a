"""
Truthful reporting wins, whoever the peer is
============================================

Two checks on one binary worker.  First, no relabelling, mixture or guess
beats reporting honestly, against peers playing several fixed strategies.
Second, the reward they get does not depend on the quality of their peer.
"""

import numpy as np

from dbtrust import experiments as ex
from dbtrust.config import ExperimentConfig

cfg = ExperimentConfig().with_overrides(repeats=10)
probe = np.array([[0.8, 0.2], [0.3, 0.7]])

rep = ex.run_dominance_check(cfg, probes=[probe], shared_tasks=10_000)
print("mean reward by deviation (rows) and peer (columns)")
peers = sorted({r.peer for r in rep.rows})
print(" " * 20 + "".join(f"{p[:14]:>16s}" for p in peers))
for strat in dict.fromkeys(r.strategy for r in rep.rows):
    cells = {r.peer: r.mean_reward for r in rep.rows if r.strategy == strat}
    print(f"{strat:20s}" + "".join(f"{cells[p]:+16.3f}" for p in peers))
print("truthful wins everywhere:", rep.passed)

###############################################################################
# Fairness: the same worker against peers whose trace ranges from 1.2 to 2.

fair = ex.run_fairness_check(cfg.with_overrides(repeats=100))
for r in fair.rows:
    tail = f"{r.mean_reward:+.4f}" if r.applicable else "not usable (guessing peer)"
    print(f"{r.peer:16s} trace {r.peer_trace:.3f}  {tail}")
print(f"spread {fair.spread:.4f}; limit trace(A) - 1 = {fair.probe_reward_limit:.2f}")
