"""
Passing trust along a chain of workers
======================================

A worker's trustworthiness can be recovered from nothing but their answers on
tasks they share with someone whose trustworthiness is already known.  The
recovered matrix then lets their answers score the next worker, and so on.
"""

import numpy as np

from dbtrust import WorkerStrategy, compose_trust, estimate_trust, project_stochastic
from dbtrust.agents import WorkerSpec, sample_ground_truths, simulate_answers

rng = np.random.default_rng(3)
prior = np.array([0.5, 0.5])
n_shared = 20_000

###############################################################################
# Three workers.  The middle one swaps every label, which makes their answers
# wrong most of the time but still perfectly usable as a reference.

workers = [
    WorkerSpec("ann", [[0.9, 0.1], [0.2, 0.8]], WorkerStrategy.truthful(2), "truthful"),
    WorkerSpec("bo", [[0.85, 0.15], [0.1, 0.9]], WorkerStrategy.permutation([1, 0]),
               "permutation"),
    WorkerSpec("cy", [[0.7, 0.3], [0.25, 0.75]], WorkerStrategy.truthful(2), "truthful"),
]

###############################################################################
# The chain starts at gold answers (identity trust).  Each link solves the
# next worker's trust against the previous link's *estimated* trust.

g = sample_ground_truths(n_shared, prior, rng)
peer_labels, peer_trust = g, np.eye(2)
for w in workers:
    labels = simulate_answers(w, g, rng)
    raw, coeffs = estimate_trust(labels, peer_labels, peer_trust, prior)
    print(f"{w.id:4s} true trust {np.round(w.trust, 3).tolist()}")
    print(f"     solved     {np.round(raw, 3).tolist()}  "
          f"reward {np.trace(raw) - 1:+.3f}  (peer condition {coeffs.condition_estimate:.2f})")
    peer_labels, peer_trust = labels, project_stochastic(raw)

###############################################################################
# A guessing worker earns nothing, whatever distribution they guess from.

lazy = WorkerSpec("lazy", np.eye(2), WorkerStrategy.heuristic([0.8, 0.2]), "heuristic")
raw, _ = estimate_trust(simulate_answers(lazy, g, rng), g, np.eye(2), prior)
print(f"guesser reward {np.trace(raw) - 1:+.4f}; exact limit "
      f"{np.trace(compose_trust(np.eye(2), lazy.strategy)) - 1:+.4f}")
