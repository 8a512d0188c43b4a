"""Answers, strategies, proficiency and trustworthiness.

A worker's *proficiency* ``A`` maps ground truth to the answer they obtain,
their *reporting strategy* maps the obtained answer to the one they report, and
the resulting *trustworthiness* ``T`` maps ground truth straight to the
reported answer.  All three are K x K right stochastic matrices, represented
here as read-only float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

#: Tolerance for row sums of stochastic matrices and probability vectors.
STOCHASTIC_TOL = 1e-12


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class AnswerSpace:
    """Discrete answer space ``{0, ..., k-1}``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InvalidInput(f"answer space needs k >= 2, got {self.k!r}")

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.k)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def probability_vector(p, k: Optional[int] = None, *, strict: bool = False,
                       name: str = "vector") -> np.ndarray:
    """Validate ``p`` as a probability vector and return a read-only copy.

    With ``strict=True`` every entry must be positive (a fully mixed prior).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {p.shape}")
    if k is not None and p.shape[0] != k:
        raise InvalidInput(f"{name} has length {p.shape[0]}, expected {k}")
    if not (p.min() >= 0 and p.max() <= 1):
        raise InvalidInput(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
        raise InvalidInput(f"{name} sums to {p.sum()!r}, not 1")
    if strict and np.any(p <= 0):
        raise InvalidInput(f"{name} must be fully mixed (all entries > 0)")
    return _frozen(p)


def prior_vector(p, k: Optional[int] = None) -> np.ndarray:
    """Validate a fully mixed prior over the ground truth."""
    return probability_vector(p, k, strict=True, name="prior")


def stochastic_matrix(m, k: Optional[int] = None, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a right stochastic matrix and return a read-only copy.

    Rows off by more than ``STOCHASTIC_TOL`` are rejected, never renormalized.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {m.shape}")
    if k is not None and m.shape[0] != k:
        raise InvalidInput(f"{name} is {m.shape[0]}x{m.shape[0]}, expected {k}x{k}")
    if m.shape[0] < 2:
        raise InvalidInput(f"{name} needs at least two labels")
    # NaN fails both comparisons
    if not (m.min() >= 0 and m.max() <= 1):
        raise InvalidInput(f"{name} entries must lie in [0, 1]")
    dev = np.abs(m.sum(axis=1) - 1.0)
    if dev.max() > STOCHASTIC_TOL:
        raise InvalidInput(f"{name} rows must sum to 1 (max deviation {dev.max():.3g})")
    return _frozen(m)


def is_stochastic(m, tol: float = STOCHASTIC_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(m.ndim == 2 and np.all(m >= 0) and np.all(m <= 1)
                and np.all(np.abs(m.sum(axis=1) - 1.0) <= tol))


def has_identical_rows(m, atol: float = 0.0) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(np.all(np.abs(m - m[0]) <= atol))


def permutation_matrix(perm) -> np.ndarray:
    """Report matrix sending obtained answer ``x`` to ``perm[x]``."""
    perm = np.asarray(perm, dtype=int)
    k = perm.shape[0]
    if sorted(perm.tolist()) != list(range(k)):
        raise InvalidInput(f"{perm.tolist()} is not a permutation of 0..{k - 1}")
    m = np.zeros((k, k))
    m[np.arange(k), perm] = 1.0
    return _frozen(m)


def cyclic_permutation(k: int) -> np.ndarray:
    """The map ``x -> (x + 1) mod k``; for k=2 this flips every answer."""
    return permutation_matrix((np.arange(k) + 1) % k)


@dataclass(frozen=True, eq=False)
class WorkerStrategy:
    """Effort bit plus reporting rule.

    An effortful worker reports through ``report_matrix`` (row = obtained
    answer); a worker who skips the work draws every report from
    ``report_vector``.  Mixed strategies are just non-degenerate entries.
    """

    effort: bool
    report_matrix: Optional[np.ndarray] = None
    report_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.effort:
            if self.report_matrix is None or self.report_vector is not None:
                raise InvalidInput("effortful strategy takes a report matrix only")
            object.__setattr__(self, "report_matrix",
                               stochastic_matrix(self.report_matrix, name="report matrix"))
        else:
            if self.report_vector is None or self.report_matrix is not None:
                raise InvalidInput("effortless strategy takes a report vector only")
            object.__setattr__(self, "report_vector",
                               probability_vector(self.report_vector, name="report vector"))

    @property
    def k(self) -> int:
        if self.effort:
            return self.report_matrix.shape[0]
        return self.report_vector.shape[0]

    @classmethod
    def truthful(cls, k: int) -> "WorkerStrategy":
        return cls(True, report_matrix=np.eye(k))

    @classmethod
    def heuristic(cls, report_vector) -> "WorkerStrategy":
        return cls(False, report_vector=report_vector)

    @classmethod
    def permutation(cls, perm) -> "WorkerStrategy":
        return cls(True, report_matrix=permutation_matrix(perm))

    @classmethod
    def mixed(cls, report_matrix) -> "WorkerStrategy":
        return cls(True, report_matrix=report_matrix)

    def is_heuristic(self) -> bool:
        return (not self.effort) or has_identical_rows(self.report_matrix)

    def __repr__(self):
        rule = self.report_matrix if self.effort else self.report_vector
        return f"WorkerStrategy(effort={self.effort}, {np.round(rule, 4).tolist()})"


def compose_trust(proficiency, strategy: WorkerStrategy) -> np.ndarray:
    """Trustworthiness of a worker with the given proficiency and strategy.

    Effortful workers get ``A @ S``; effortless ones get a matrix whose rows
    all equal the report vector.
    """
    a = stochastic_matrix(proficiency, name="proficiency")
    if strategy.k != a.shape[0]:
        raise InvalidInput(f"proficiency is {a.shape[0]}x{a.shape[0]} "
                           f"but strategy has k={strategy.k}")
    if strategy.effort:
        t = a @ strategy.report_matrix
    else:
        t = np.tile(strategy.report_vector, (a.shape[0], 1))
    # matmul can drift a few ulp off the simplex
    t = np.clip(t, 0.0, 1.0)
    return stochastic_matrix(t, name="trust")


def reward_score(t) -> float:
    """``trace(T) - 1``: positive for informative honest work, zero for guessing."""
    return float(np.trace(np.asarray(t, dtype=float)) - 1.0)


def apply_strategy(observed, strategy: WorkerStrategy, rng: np.random.Generator):
    """Draw the reported label(s) for the observed answer(s).

    ``observed`` may be a single label or an integer array; it must be None
    for an effortless strategy.
    """
    if strategy.effort:
        if observed is None:
            raise InvalidInput("an effortful strategy needs an observed answer")
        obs = np.asarray(observed, dtype=np.intp)
        return sample_rows(strategy.report_matrix, obs, rng)
    if observed is not None:
        raise InvalidInput("an effortless strategy never observes an answer")
    return sample_rows(strategy.report_vector[None, :], np.intp(0), rng)


def sample_rows(m: np.ndarray, rows, rng: np.random.Generator):
    """Sample one column index from each requested row of stochastic ``m``."""
    rows = np.asarray(rows, dtype=np.intp)
    cdf = np.cumsum(m, axis=1)
    cdf[:, -1] = np.inf
    u = rng.random(rows.shape)
    # first column whose cdf exceeds u
    out = (u[..., None] >= cdf[rows][..., :-1]).sum(axis=-1)
    if out.ndim == 0:
        return int(out)
    return out
