"""Seeded simulation of workers, ground truths and submissions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    InvalidInput,
    WorkerStrategy,
    compose_trust,
    cyclic_permutation,
    has_identical_rows,
    probability_vector,
    sample_rows,
    stochastic_matrix,
)

STRATEGY_TAGS = ("truthful", "heuristic", "permutation", "mixed")


@dataclass(frozen=True)
class ProficiencySpec:
    """Family for the diagonal of a proficiency matrix.

    ``"beta"`` draws each diagonal entry from Beta(alpha, beta);
    ``"uniform"`` draws it from (1/k, 1].
    """

    kind: str = "beta"
    k: int = 2
    alpha: float = 5.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("beta", "uniform"):
            raise InvalidInput(f"unknown proficiency family {self.kind!r}")
        if self.k < 2:
            raise InvalidInput("k must be at least 2")
        if self.kind == "beta" and (self.alpha <= 0 or self.beta <= 0):
            raise InvalidInput("Beta parameters must be positive")


def sample_proficiency(spec: ProficiencySpec, rng: np.random.Generator) -> np.ndarray:
    """Random proficiency matrix; off-diagonal mass split by a flat Dirichlet."""
    k = spec.k
    if spec.kind == "beta":
        diag = rng.beta(spec.alpha, spec.beta, size=k)
    else:
        diag = 1.0 - rng.uniform(0.0, 1.0 - 1.0 / k, size=k)
    a = np.empty((k, k))
    for g in range(k):
        rest = rng.dirichlet(np.ones(k - 1)) if k > 2 else np.ones(1)
        a[g, np.arange(k) != g] = (1.0 - diag[g]) * rest
        a[g, g] = diag[g]
    # Dirichlet shares are exact only to a few ulp
    a /= a.sum(axis=1, keepdims=True)
    return stochastic_matrix(np.clip(a, 0.0, 1.0), k, name="proficiency")


def sample_ground_truths(n: int, prior, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. labels from ``prior``; index = task id.

    The prior is only checked for being a distribution, so point masses are
    allowed here for testing.
    """
    if n < 0:
        raise InvalidInput("n must be non-negative")
    p = probability_vector(prior, name="prior")
    if n == 0:
        return np.empty(0, dtype=np.intp)
    return sample_rows(p[None, :], np.zeros(n, dtype=np.intp), rng)


@dataclass(frozen=True, eq=False)
class WorkerSpec:
    id: str
    proficiency: np.ndarray
    strategy: WorkerStrategy
    tag: str

    def __post_init__(self):
        if self.tag not in STRATEGY_TAGS:
            raise InvalidInput(f"unknown strategy tag {self.tag!r}")
        object.__setattr__(self, "proficiency",
                           stochastic_matrix(self.proficiency, self.strategy.k,
                                             name="proficiency"))
        s = self.strategy
        if self.tag == "truthful" and not (s.effort and np.array_equal(s.report_matrix,
                                                                       np.eye(s.k))):
            raise InvalidInput("truthful tag needs effort and an identity report matrix")
        if self.tag == "heuristic" and not s.is_heuristic():
            raise InvalidInput("heuristic tag needs a report independent of the observation")
        if self.tag == "permutation" and not (s.effort and _is_permutation(s.report_matrix)):
            raise InvalidInput("permutation tag needs a permutation report matrix")

    @property
    def trust(self) -> np.ndarray:
        return compose_trust(self.proficiency, self.strategy)


def _is_permutation(m: np.ndarray) -> bool:
    return bool(np.all((m == 0) | (m == 1)) and np.all(m.sum(axis=0) == 1))


def strategy_for(tag: str, k: int, *, heuristic_report=None, permutation=None) -> WorkerStrategy:
    """Default strategy for a tag: uniform guessing, or the cyclic relabelling."""
    if tag == "truthful":
        return WorkerStrategy.truthful(k)
    if tag == "heuristic":
        vec = np.full(k, 1.0 / k) if heuristic_report is None else heuristic_report
        return WorkerStrategy.heuristic(vec)
    if tag == "permutation":
        m = cyclic_permutation(k) if permutation is None else \
            WorkerStrategy.permutation(permutation).report_matrix
        return WorkerStrategy(True, report_matrix=m)
    raise InvalidInput(f"no default strategy for tag {tag!r}")


def make_workers(n: int, spec: ProficiencySpec, strategy_mix, rng: np.random.Generator, *,
                 prefix: str = "w", start: int = 0, heuristic_report=None,
                 permutation=None) -> list:
    """Draw ``n`` workers with tags from ``strategy_mix`` over (truthful, heuristic, permutation)."""
    mix = probability_vector(strategy_mix, 3, name="strategy mix")
    tags = ("truthful", "heuristic", "permutation")
    workers = []
    for i in range(n):
        tag = tags[sample_rows(mix[None, :], 0, rng)]
        a = sample_proficiency(spec, rng)
        s = strategy_for(tag, spec.k, heuristic_report=heuristic_report, permutation=permutation)
        workers.append(WorkerSpec(f"{prefix}{start + i}", a, s, tag))
    return workers


def simulate_answers(worker: WorkerSpec, truths, rng: np.random.Generator) -> np.ndarray:
    """Reported labels for tasks whose ground truths are ``truths``.

    Effortful: ground truth -> obtained answer (proficiency) -> report
    (strategy).  Effortless: reports drawn straight from the report vector.
    """
    g = np.asarray(truths, dtype=np.intp)
    s = worker.strategy
    if not s.effort:
        return sample_rows(s.report_vector[None, :], np.zeros(g.shape, dtype=np.intp), rng)
    x = sample_rows(worker.proficiency, g, rng)
    if np.array_equal(s.report_matrix, np.eye(s.k)):
        return x
    return sample_rows(s.report_matrix, x, rng)


def simulate_submission(worker: WorkerSpec, batch, truths, rng: np.random.Generator):
    """Answer every task of ``batch``; returns ``(task_ids, labels)`` in batch order.

    ``truths`` maps task id to ground truth (array indexed by id, or a dict).
    """
    tasks = batch.tasks
    if isinstance(truths, dict):
        try:
            g = np.array([truths[t] for t in tasks], dtype=np.intp)
        except KeyError as exc:
            raise InvalidInput(f"no ground truth for task {exc.args[0]}") from None
    else:
        truths = np.asarray(truths)
        if tasks.size and (tasks.min() < 0 or tasks.max() >= truths.shape[0]):
            raise InvalidInput("batch references tasks without ground truth")
        g = truths[tasks]
    return tasks, simulate_answers(worker, g, rng)


def empirical_trust(truths, reports, k: int) -> np.ndarray:
    """Row-normalized tally of (ground truth, report) pairs."""
    n = np.bincount(np.asarray(truths) * k + np.asarray(reports), minlength=k * k).reshape(k, k)
    return n / np.maximum(n.sum(axis=1, keepdims=True), 1)


def random_mixed_strategy(k: int, rng: np.random.Generator,
                          concentration: float = 1.0) -> WorkerStrategy:
    """Effortful strategy whose report rows are independent Dirichlet draws."""
    m = rng.dirichlet(np.full(k, concentration), size=k)
    m /= m.sum(axis=1, keepdims=True)
    while has_identical_rows(m):
        m = rng.dirichlet(np.full(k, concentration), size=k)
    return WorkerStrategy.mixed(np.clip(m, 0.0, 1.0))


__all__ = [
    "ProficiencySpec", "WorkerSpec", "STRATEGY_TAGS", "sample_proficiency",
    "sample_ground_truths", "simulate_answers", "simulate_submission",
    "make_workers", "strategy_for", "empirical_trust", "random_mixed_strategy",
]
