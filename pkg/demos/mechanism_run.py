"""
One mechanism run from thirty gold tasks
========================================

Only the first five workers ever see gold tasks.  Everyone after them is
scored against the fresh answers of someone scored earlier.
"""

import numpy as np

from dbtrust import experiments as ex
from dbtrust.config import config_from_dict
from dbtrust.mechanism import ORACLE_ID

cfg = config_from_dict({"mechanism": {"s_o": 30, "s_n": 30},
                        "strategy_mix": [1 / 3, 1 / 3, 1 / 3]})
run = ex.simulate_run(cfg, np.random.default_rng(0))

###############################################################################
# Rewards per round and strategy.  Negative rewards are kept in the ledger;
# flooring them is a payout decision (``floor_rewards``).

for r, size in enumerate(cfg.rounds):
    ev = [e for e in run.ledger.evaluations if e.round == r]
    admitted = sum(1 for e in run.ledger.of_kind("admission") if e.round == r)
    by_tag = {}
    for e in ev:
        by_tag.setdefault(e.strategy_tag, []).append(e.evaluation.reward)
    means = "  ".join(f"{t} {np.mean(v):+.2f}" for t, v in sorted(by_tag.items()))
    print(f"round {r}: {len(ev):3d}/{size} scored, {admitted:3d} admitted   {means}")

###############################################################################
# Gold economy: how many evaluations used the oracle entry?

print(f"\n{run.oracle_evaluations} of {len(run.ledger.evaluations)} evaluations used gold "
      f"answers; pool holds {len(run.pool)} entries")
print("unserved workers:", run.unserved_workers)
first = [e for e in run.ledger.evaluations if e.peer_source_id == ORACLE_ID]
print("scored on gold:", ", ".join(f"{e.worker_id} ({e.strategy_tag})" for e in first))
