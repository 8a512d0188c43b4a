"""Transitive trust estimation from a peer with known trustworthiness.

Given answer pairs on tasks a worker shares with a peer whose trust ``T_j``
is known, the empirical conditional ``w(y_i | y_j)`` satisfies, for every
pair of labels,

    w(y_i | y_j) = sum_g T_i[g, y_i] * T_j[g, y_j] * P(g) / w(y_j)

The bracketed factor is the posterior ``P(G = g | Y_j = y_j)``; collected
into a K x K coefficient matrix it is shared by all K systems (one per
column of ``T_i``), so a single factorization solves them together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InvalidInput, prior_vector, stochastic_matrix

#: Condition-number ceiling above which a coefficient matrix counts as singular.
DEFAULT_CONDITION_THRESHOLD = 1e6


class NotWellDefined(ValueError):
    """A peer label needed for the coefficients never occurred (w(y_j) = 0)."""


class SolverFailure(ArithmeticError):
    """The coefficient matrix turned out numerically singular."""


@dataclass(frozen=True, eq=False)
class JointCounts:
    """``counts[y_j, y_i]``: shared tasks where the peer said y_j and the worker y_i."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class EmpiricalDistributions:
    """Row-normalized tallies.

    Rows of ``conditional`` for peer labels outside ``support`` are NaN.
    """

    conditional: np.ndarray
    marginal: np.ndarray
    support: frozenset

    @property
    def complete(self) -> bool:
        return len(self.support) == self.marginal.shape[0]


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    c: np.ndarray
    condition_estimate: float

    @property
    def k(self) -> int:
        return self.c.shape[1]


def tally_joint(pairs, k: int) -> JointCounts:
    """Count ``(worker_label, peer_label)`` pairs into a K x K table.

    ``pairs`` is either a sequence of 2-tuples or an ``(n, 2)`` integer array.
    """
    arr = np.asarray(pairs)
    if arr.size == 0:
        raise InvalidInput("no shared answers to tally")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInput(f"pairs must have shape (n, 2), got {arr.shape}")
    return tally_labels(arr[:, 0], arr[:, 1], k)


def tally_labels(worker_labels, peer_labels, k: int) -> JointCounts:
    """Like :func:`tally_joint` but from two aligned label arrays."""
    yi = np.asarray(worker_labels)
    yj = np.asarray(peer_labels)
    if yi.shape != yj.shape or yi.ndim != 1:
        raise InvalidInput("worker and peer labels must be aligned 1-d arrays")
    if yi.size == 0:
        raise InvalidInput("no shared answers to tally")
    if not (np.issubdtype(yi.dtype, np.integer) and np.issubdtype(yj.dtype, np.integer)):
        raise InvalidInput("labels must be integers")
    if yi.min() < 0 or yj.min() < 0 or yi.max() >= k or yj.max() >= k:
        raise InvalidInput(f"labels must lie in 0..{k - 1}")
    counts = np.bincount(yj * k + yi, minlength=k * k).reshape(k, k)
    return JointCounts(counts)


def distributions(counts: JointCounts) -> EmpiricalDistributions:
    n = np.asarray(counts.counts)
    total = n.sum()
    if total <= 0:
        raise InvalidInput("cannot normalize an empty tally")
    row_total = n.sum(axis=1)
    marginal = row_total / total
    support = row_total > 0
    conditional = np.full(n.shape, np.nan)
    conditional[support] = n[support] / row_total[support, None]
    return EmpiricalDistributions(conditional, marginal,
                                  frozenset(np.flatnonzero(support).tolist()))


def condition_number(c) -> float:
    """2-norm condition number; ``inf`` for a singular matrix."""
    c = np.asarray(c, dtype=float)
    s = np.linalg.svd(c, compute_uv=False)
    if s[-1] == 0 or not np.isfinite(s[-1]):
        return float("inf")
    return float(s[0] / s[-1])


def model_marginal(t_peer, prior) -> np.ndarray:
    """Peer's report distribution implied by the model: ``sum_g T_j[g, y] P(g)``."""
    return np.asarray(prior, dtype=float) @ np.asarray(t_peer, dtype=float)


def build_coefficients(t_peer, prior, marginal) -> CoefficientMatrix:
    """Posterior matrix ``c[y_j, g] = T_j[g, y_j] P(g) / w(y_j)``.

    Raises :class:`NotWellDefined` if any peer label has zero marginal.
    """
    t = stochastic_matrix(t_peer, name="peer trust")
    k = t.shape[0]
    p = prior_vector(prior, k)
    m = np.asarray(marginal, dtype=float)
    if m.shape != (k,):
        raise InvalidInput(f"marginal has shape {m.shape}, expected ({k},)")
    if np.any(m <= 0):
        raise NotWellDefined(f"peer labels {np.flatnonzero(m <= 0).tolist()} never observed")
    c = (t * p[:, None]).T / m[:, None]
    return CoefficientMatrix(c, condition_number(c))


def is_informative(coeffs: CoefficientMatrix,
                   condition_threshold: float = DEFAULT_CONDITION_THRESHOLD) -> bool:
    """Whether the posterior rows are distinct enough to pin down ``T_i``.

    Full rank in exact arithmetic; here, condition number within the threshold.
    """
    c = np.asarray(coeffs.c)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or not np.all(np.isfinite(c)):
        return False
    return bool(coeffs.condition_estimate <= condition_threshold)


def solve_trust(coeffs: CoefficientMatrix, conditional) -> np.ndarray:
    """Solve ``c @ T_i[:, y_i] = conditional[:, y_i]`` for every ``y_i``.

    One LU factorization (partial pivoting) serves all right-hand sides.  The
    result is returned raw: sampling noise can push it off the simplex.
    """
    c = np.asarray(coeffs.c, dtype=float)
    rhs = np.asarray(conditional, dtype=float)
    if rhs.shape != c.shape:
        raise InvalidInput(f"conditional has shape {rhs.shape}, expected {c.shape}")
    if not np.all(np.isfinite(rhs)):
        raise InvalidInput("conditional has missing rows")
    try:
        t = np.linalg.solve(c, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(t)):
        raise SolverFailure("non-finite solution")
    return t


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    n, k = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=1)
    theta = css[np.arange(n), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def project_stochastic(raw) -> np.ndarray:
    """Repair a raw solution into a valid stochastic matrix, row by row.

    Rows already on the simplex come back unchanged.
    """
    raw = np.asarray(raw, dtype=float)
    out = np.array(raw, copy=True)
    bad = ~((raw >= 0).all(axis=1) & (np.abs(raw.sum(axis=1) - 1.0) <= 1e-12))
    if bad.any():
        proj = project_simplex(raw[bad])
        # renormalize away the last few ulp so validation passes
        proj /= proj.sum(axis=1, keepdims=True)
        out[bad] = proj
    return stochastic_matrix(np.clip(out, 0.0, 1.0), name="projected trust")


def estimate_trust(worker_labels, peer_labels, t_peer, prior, *,
                   condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
                   marginal: str = "empirical"):
    """Tally, build coefficients, gate and solve in one go.

    Returns ``(raw_trust, coefficients)``.  ``marginal`` is ``"empirical"``
    (tallied peer answers) or ``"model"`` (implied by ``t_peer`` and ``prior``).
    """
    t_peer = np.asarray(t_peer, dtype=float)
    k = t_peer.shape[0]
    dist = distributions(tally_labels(worker_labels, peer_labels, k))
    if not dist.complete:
        missing = sorted(set(range(k)) - dist.support)
        raise NotWellDefined(f"peer never reported {missing} on the shared tasks")
    if marginal == "empirical":
        m = dist.marginal
    elif marginal == "model":
        m = model_marginal(t_peer, prior)
    else:
        raise InvalidInput(f"unknown marginal source {marginal!r}")
    coeffs = build_coefficients(t_peer, prior, m)
    if not is_informative(coeffs, condition_threshold):
        raise SolverFailure(f"peer coefficients ill-conditioned "
                            f"(condition {coeffs.condition_estimate:.3g})")
    return solve_trust(coeffs, dist.conditional), coeffs
