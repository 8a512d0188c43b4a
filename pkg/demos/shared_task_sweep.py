"""
How many shared tasks are enough?
=================================

The same population at 10, 30, 100 and 300 shared tasks.  Fewer shared
tasks make each estimate noisier but do not change who comes out ahead.
"""

from dbtrust import experiments as ex
from dbtrust.config import ExperimentConfig

cfg = ExperimentConfig().with_overrides(repeats=10)
res = ex.run_shared_task_sweep(cfg)

print("shared   truthful          heuristic         permutation")
for s in cfg.shared_task_sweep:
    cells = [res.row(t, s) for t in ex.TAG_ORDER]
    print(f"{s:6d}   " + "   ".join(f"{c.mean_reward:+.3f} ± {c.std_reward:.3f}" for c in cells))
