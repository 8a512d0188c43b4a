"""The transitive-trust payment mechanism.

The mechanism keeps an *informative answer pool*: batches of task answers,
each tagged with an estimate of the trustworthiness of whoever produced them.
It starts from a single oracle entry (gold answers), publishes batches that
mix ``s_o`` tasks already answered by one pool entry with ``s_n`` fresh
tasks, pays every worker ``beta * (trace(T_i) - 1)`` where ``T_i`` is solved
from their answers on the shared tasks, and adds their fresh answers to the pool
when they are informative enough to evaluate others.

Everything runs as one serialized state machine: pool admissions, fan-out
counters and the ledger are updated in submission order, so a run is a pure
function of its inputs and random stream.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .agents import WorkerSpec, simulate_submission
from .model import (
    AnswerSpace,
    InvalidInput,
    has_identical_rows,
    prior_vector,
    stochastic_matrix,
)
from .solver import (
    DEFAULT_CONDITION_THRESHOLD,
    NotWellDefined,
    SolverFailure,
    build_coefficients,
    distributions,
    is_informative,
    model_marginal,
    project_stochastic,
    solve_trust,
    tally_labels,
)

POOL_POLICIES = ("least-used", "fifo")
ORACLE_ID = "oracle"


class PoolStarved(RuntimeError):
    """Every pool entry has used up its fan-out."""


class SupplyExhausted(RuntimeError):
    """No fresh tasks are left to mix into a batch."""


class EvaluationAborted(RuntimeError):
    """The worker's answers could not be scored against this peer entry."""


class RejectedSubmission(InvalidInput):
    pass


@dataclass
class MechanismConfig:
    k_fanout: int = 5
    s_o: int = 30
    s_n: int = 30
    beta: float = 1.0
    cost_of_effort: float = 0.0
    prior: Optional[np.ndarray] = None
    answer_space: AnswerSpace = field(default_factory=lambda: AnswerSpace(2))
    target_answers: int = 1
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD
    admission_threshold: Optional[float] = None
    pool_policy: str = "least-used"
    marginal: str = "empirical"
    floor_rewards: bool = False
    max_retries: int = 2

    def __post_init__(self):
        if isinstance(self.answer_space, int):
            self.answer_space = AnswerSpace(self.answer_space)
        k = self.answer_space.k
        if self.prior is None:
            self.prior = np.full(k, 1.0 / k)
        self.prior = prior_vector(self.prior, k)
        if self.k_fanout < 1:
            raise InvalidInput("k_fanout must be at least 1")
        if self.s_o < 1 or self.s_n < 0:
            raise InvalidInput("batch sizes must be positive")
        if self.s_n < self.s_o:
            raise InvalidInput(f"s_n ({self.s_n}) must be >= s_o ({self.s_o}) so fresh "
                               "answers can seed later batches")
        if not self.beta > 0:
            raise InvalidInput("beta must be positive")
        if self.cost_of_effort < 0:
            raise InvalidInput("cost_of_effort must be non-negative")
        if self.target_answers < 1:
            raise InvalidInput("target_answers must be at least 1")
        if not self.condition_threshold >= 1:
            raise InvalidInput("condition_threshold must be >= 1")
        if self.admission_threshold is None:
            self.admission_threshold = self.condition_threshold
        if not self.admission_threshold >= 1:
            raise InvalidInput("admission_threshold must be >= 1")
        if self.pool_policy not in POOL_POLICIES:
            raise InvalidInput(f"pool_policy must be one of {POOL_POLICIES}")
        if self.marginal not in ("empirical", "model"):
            raise InvalidInput("marginal must be 'empirical' or 'model'")
        if self.max_retries < 0:
            raise InvalidInput("max_retries must be non-negative")

    @property
    def k(self) -> int:
        return self.answer_space.k


def beta_bound(proficiency, cost_of_effort: float) -> float:
    """Smallest scale for which truthful work covers its cost: C / (trace(A) - 1)."""
    gain = float(np.trace(np.asarray(proficiency))) - 1.0
    if cost_of_effort == 0:
        return 0.0
    return cost_of_effort / gain if gain > 0 else float("inf")


def check_beta(config: MechanismConfig, proficiency) -> bool:
    """Warn (never fail) if ``config.beta`` is at or below the bound for this worker."""
    bound = beta_bound(proficiency, config.cost_of_effort)
    ok = config.beta > bound
    if not ok:
        warnings.warn(f"beta={config.beta} does not exceed {bound:.4g}; "
                      "truthful effort may not pay for itself", RuntimeWarning, stacklevel=2)
    return ok


# -- tasks -------------------------------------------------------------------

class TaskSupply:
    """Fresh tasks ``first_id .. first_id + n_tasks - 1``.

    Tasks are issued in passes so every task reaches ``target_answers`` fresh
    answers before any gets more; ids within one batch are distinct as long
    as a batch is no larger than the task set.
    """

    def __init__(self, n_tasks: int, target_answers: int = 1, first_id: int = 0):
        if n_tasks < 0:
            raise InvalidInput("n_tasks must be non-negative")
        self.n_tasks = n_tasks
        self.first_id = first_id
        self.target_answers = target_answers
        self.answers_collected = np.zeros(n_tasks, dtype=np.int64)
        self._issued = 0
        self._cursor = 0
        self._deferred = []

    @property
    def remaining(self) -> int:
        return self.n_tasks * self.target_answers - self._issued

    def take(self, n: int, avoid=None) -> np.ndarray:
        """Issue ``n`` distinct fresh task ids, none of them in ``avoid``.

        Slots that collide with ``avoid`` are deferred to a later batch.
        """
        if n > self.remaining or n > self.n_tasks:
            raise SupplyExhausted(f"{self.remaining} fresh task slots left, batch needs {n}")
        if avoid is None and not self._deferred:
            ids = (self._cursor + np.arange(n)) % self.n_tasks + self.first_id
            self._cursor += n
            self._issued += n
            return ids
        avoid = set() if avoid is None else set(np.asarray(avoid).tolist())
        out, seen, deferred = [], set(), []
        while len(out) < n:
            if self._deferred and self._deferred[0] not in avoid \
                    and self._deferred[0] not in seen:
                t = self._deferred.pop(0)
            elif self._cursor < self.n_tasks * self.target_answers:
                t = self._cursor % self.n_tasks + self.first_id
                self._cursor += 1
                if t in avoid or t in seen:
                    deferred.append(t)
                    continue
            else:
                self._deferred = deferred + self._deferred
                raise SupplyExhausted("remaining fresh tasks all collide with the batch")
            out.append(t)
            seen.add(t)
        self._deferred = deferred + self._deferred
        self._issued += n
        return np.array(out, dtype=np.int64)

    def record(self, task_ids) -> None:
        idx = np.asarray(task_ids, dtype=np.int64) - self.first_id
        np.add.at(self.answers_collected, idx, 1)
        if np.any(self.answers_collected[idx] > self.target_answers):
            raise AssertionError("task answered more often than its target")

    @property
    def done(self) -> bool:
        return bool(np.all(self.answers_collected >= self.target_answers))


# -- pool --------------------------------------------------------------------

@dataclass(eq=False)
class PoolEntry:
    source_id: str
    trust: np.ndarray
    tasks: np.ndarray
    labels: np.ndarray
    fanout_used: int = 0
    order: int = 0

    @property
    def answered_tasks(self) -> list:
        return list(zip(self.tasks.tolist(), self.labels.tolist()))


class Pool:
    """Informative answer pool with fan-out bookkeeping."""

    def __init__(self):
        self.entries: List[PoolEntry] = []
        self._heap = []
        self._fifo = 0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, source_id, trust, tasks, labels) -> PoolEntry:
        tasks = np.asarray(tasks, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.intp)
        if tasks.shape != labels.shape or tasks.ndim != 1:
            raise InvalidInput("tasks and labels must be aligned 1-d sequences")
        entry = PoolEntry(source_id, stochastic_matrix(trust, name="pool trust"),
                          tasks, labels, 0, len(self.entries))
        tasks.setflags(write=False)
        labels.setflags(write=False)
        self.entries.append(entry)
        heapq.heappush(self._heap, (0, entry.order))
        return entry

    def select(self, config: MechanismConfig, exclude=()) -> PoolEntry:
        """Pick the next entry per ``config.pool_policy`` and charge one fan-out."""
        cap, s_o = config.k_fanout, config.s_o

        def usable(e):
            return e.fanout_used < cap and e.tasks.shape[0] >= s_o and e.source_id not in exclude

        if config.pool_policy == "fifo":
            while self._fifo < len(self.entries) and \
                    self.entries[self._fifo].fanout_used >= cap:
                self._fifo += 1
            entry = next((e for e in self.entries[self._fifo:] if usable(e)), None)
        else:
            entry, skipped = None, []
            while self._heap:
                used, order = heapq.heappop(self._heap)
                e = self.entries[order]
                if used != e.fanout_used or e.fanout_used >= cap:
                    continue  # stale heap key
                if usable(e):
                    entry = e
                    break
                skipped.append((used, order))
            for item in skipped:
                heapq.heappush(self._heap, item)
        if entry is None:
            raise PoolStarved("no pool entry has fan-out left")
        entry.fanout_used += 1
        if entry.fanout_used < cap:
            heapq.heappush(self._heap, (entry.fanout_used, entry.order))
        return entry

    def snapshot(self) -> dict:
        """Nested mapping mirroring ``[source : trust : task-answer pairs]``."""
        return {"pool": [
            {"source": e.source_id,
             "trust": e.trust.tolist(),
             "fanout_used": e.fanout_used,
             "answers": [[t, a] for t, a in e.answered_tasks]}
            for e in self.entries]}


def init_pool(oracle_answers, t_oracle) -> Pool:
    """Seed the pool with the oracle's gold answers."""
    tasks, labels = _as_answers(oracle_answers)
    if tasks.size == 0:
        raise InvalidInput("the oracle must answer at least one task")
    t = stochastic_matrix(t_oracle, name="oracle trust")
    if has_identical_rows(t):
        raise InvalidInput("oracle trust has identical rows and cannot inform anyone")
    pool = Pool()
    pool.add(ORACLE_ID, t, tasks, labels)
    return pool


# -- batches and evaluation ---------------------------------------------------

@dataclass(eq=False)
class Batch:
    shared_tasks: np.ndarray
    fresh_tasks: np.ndarray
    peer: PoolEntry
    peer_labels: np.ndarray

    @property
    def tasks(self) -> np.ndarray:
        return np.concatenate([self.shared_tasks, self.fresh_tasks])


def draft_batch(pool: Pool, task_supply: TaskSupply, config: MechanismConfig,
                exclude=()) -> Batch:
    """Publish one batch: an entry's first ``s_o`` answered tasks plus ``s_n`` fresh ones.

    Every batch drawn from the same entry shares the same ``s_o`` tasks.
    """
    if task_supply.remaining < config.s_n:
        raise SupplyExhausted("not enough fresh tasks for another batch")
    entry = pool.select(config, exclude)
    shared = entry.tasks[:config.s_o]
    # a fresh task can only reappear when tasks take several fresh answers
    fresh = task_supply.take(config.s_n, avoid=shared if task_supply.target_answers > 1 else None)
    return Batch(shared, fresh, entry, entry.labels[:config.s_o])


@dataclass(eq=False)
class Evaluation:
    worker_id: str
    raw_trust: np.ndarray
    projected_trust: np.ndarray
    reward: float
    informative: bool
    peer_source_id: str
    shared_task_count: int
    condition: float = float("nan")
    payout: float = float("nan")

    @property
    def trace_raw(self) -> float:
        return float(np.trace(self.raw_trust))


def _as_answers(submitted):
    """Normalize ``(tasks, labels)`` arrays or a sequence of ``(task, label)`` pairs."""
    if isinstance(submitted, tuple) and len(submitted) == 2 and np.ndim(submitted[0]) == 1:
        tasks = np.asarray(submitted[0], dtype=np.int64)
        labels = np.asarray(submitted[1])
    else:
        arr = np.asarray(list(submitted))
        if arr.size == 0:
            return np.empty(0, np.int64), np.empty(0, np.intp)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidInput("answers must be (task, label) pairs")
        tasks, labels = arr[:, 0].astype(np.int64), arr[:, 1]
    if tasks.shape != labels.shape:
        raise InvalidInput("tasks and labels differ in length")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        raise InvalidInput("labels must be integers")
    return tasks, labels.astype(np.intp)


def own_coefficients_informative(trust, prior, condition_threshold: float):
    """Admission test: could these answers, with this trust, score someone else?

    Uses the model-implied marginal.  Returns ``(informative, condition)``.
    """
    try:
        c = build_coefficients(trust, prior, model_marginal(trust, prior))
    except NotWellDefined:
        return False, float("inf")
    return is_informative(c, condition_threshold), c.condition_estimate


def evaluate_submission(batch: Batch, submitted, config: MechanismConfig,
                        worker_id: str = "") -> Evaluation:
    """Score a submitted batch against its peer entry.

    Raises :class:`RejectedSubmission` for malformed answers and
    :class:`EvaluationAborted` when the peer's answers cannot identify the
    worker's trust (a peer label never occurs on the shared tasks, the peer
    coefficients are ill-conditioned, or the solve fails).
    """
    tasks, labels = _as_answers(submitted)
    expected = batch.tasks
    if tasks.shape != expected.shape or not np.array_equal(tasks, expected):
        if tasks.shape != expected.shape or \
                not np.array_equal(np.sort(tasks), np.sort(expected)):
            raise RejectedSubmission("submission must answer every batch task exactly once")
        order = np.argsort(tasks, kind="stable")
        pos = np.searchsorted(tasks[order], expected)
        labels = labels[order][pos]
    k = config.k
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise RejectedSubmission(f"labels must lie in 0..{k - 1}")

    s_o = batch.shared_tasks.shape[0]
    dist = distributions(tally_labels(labels[:s_o], batch.peer_labels, k))
    if not dist.complete:
        raise EvaluationAborted(f"peer {batch.peer.source_id} never reported "
                                f"{sorted(set(range(k)) - dist.support)} on shared tasks")
    if config.marginal == "empirical":
        marginal = dist.marginal
    else:
        marginal = model_marginal(batch.peer.trust, config.prior)
    try:
        coeffs = build_coefficients(batch.peer.trust, config.prior, marginal)
    except NotWellDefined as exc:
        raise EvaluationAborted(str(exc)) from None
    if not is_informative(coeffs, config.condition_threshold):
        raise EvaluationAborted(f"peer {batch.peer.source_id} is uninformative "
                                f"(condition {coeffs.condition_estimate:.3g})")
    try:
        raw = solve_trust(coeffs, dist.conditional)
    except SolverFailure as exc:
        raise EvaluationAborted(str(exc)) from None

    projected = project_stochastic(raw)
    informative, cond = own_coefficients_informative(projected, config.prior,
                                                     config.admission_threshold)
    reward = config.beta * (float(np.trace(raw)) - 1.0)
    payout = max(reward, 0.0) if config.floor_rewards else reward
    return Evaluation(worker_id, raw, projected, reward, informative,
                      batch.peer.source_id, s_o, cond, payout)


def admit_to_pool(pool: Pool, evaluation: Evaluation, fresh_answers) -> Pool:
    """Add the worker's fresh answers if their evaluation was informative.

    Admission ignores the sign of the reward.
    """
    if evaluation.informative:
        tasks, labels = _as_answers(fresh_answers)
        pool.add(evaluation.worker_id, evaluation.projected_trust, tasks, labels)
    return pool


# -- ledger ------------------------------------------------------------------

@dataclass
class LedgerEvent:
    seq: int
    kind: str  # evaluation | admission | abort | unserved
    worker_id: str
    round: int
    strategy_tag: str = ""
    peer_source_id: str = ""
    evaluation: Optional[Evaluation] = None
    detail: str = ""


class Ledger:
    """Append-only event log stamped with a logical sequence number."""

    def __init__(self):
        self.events: List[LedgerEvent] = []

    def append(self, kind, worker_id, round, **kw) -> LedgerEvent:
        ev = LedgerEvent(len(self.events), kind, worker_id, round, **kw)
        self.events.append(ev)
        return ev

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind):
        return [e for e in self.events if e.kind == kind]

    @property
    def evaluations(self):
        return self.of_kind("evaluation")

    def rewards_by_tag(self) -> dict:
        out = {}
        for e in self.evaluations:
            out.setdefault(e.strategy_tag, []).append(e.evaluation.reward)
        return {t: np.array(r) for t, r in out.items()}

    LEDGER_COLUMNS = ("seq", "worker_id", "strategy_tag", "peer_source_id", "reward",
                      "trace_raw", "informative", "shared_task_count")

    def rows(self):
        for e in self.evaluations:
            ev = e.evaluation
            yield (e.seq, e.worker_id, e.strategy_tag, ev.peer_source_id, ev.reward,
                   ev.trace_raw, ev.informative, ev.shared_task_count)


@dataclass
class MechanismRun:
    ledger: Ledger
    pool: Pool
    supply: TaskSupply
    starved: bool
    unserved_workers: int

    @property
    def oracle_evaluations(self) -> int:
        return sum(1 for e in self.ledger.evaluations if e.peer_source_id == ORACLE_ID)

    @property
    def coverage(self) -> dict:
        s = self.supply
        return {"tasks": s.n_tasks,
                "tasks_at_target": int(np.sum(s.answers_collected >= s.target_answers)),
                "unserved_workers": self.unserved_workers,
                "pool_starved": self.starved}


def run_mechanism(config: MechanismConfig, worker_stream, task_supply: TaskSupply, truths,
                  rng: np.random.Generator, *, oracle_answers, t_oracle=None) -> MechanismRun:
    """Drive the mechanism over a stream of simulated workers.

    ``worker_stream`` is a sequence of rounds, each a sequence of
    :class:`~dbtrust.agents.WorkerSpec` (a flat sequence is one round).  At
    the start of a round one batch per worker is published from the current
    pool; workers then submit in order, each is scored and possibly admitted,
    and any worker left without a batch (or whose evaluation aborted) drafts
    lazily from the pool as it stands at that moment.  Aborted evaluations
    are retried against other entries up to ``config.max_retries`` times.
    """
    if t_oracle is None:
        t_oracle = np.eye(config.k)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    rounds = list(worker_stream)
    if rounds and isinstance(rounds[0], WorkerSpec):
        rounds = [rounds]
    pool = init_pool(oracle_answers, t_oracle)
    ledger = Ledger()
    starved = False
    unserved = 0

    for r, workers in enumerate(rounds):
        published = []
        for _ in workers:
            try:
                published.append(draft_batch(pool, task_supply, config))
            except (PoolStarved, SupplyExhausted):
                published.append(None)
        for w, batch in zip(workers, published):
            tried = set()
            for _attempt in range(config.max_retries + 1):
                if batch is None:
                    try:
                        batch = draft_batch(pool, task_supply, config, exclude=tried)
                    except PoolStarved:
                        starved = True
                        ledger.append("unserved", w.id, r, strategy_tag=w.tag,
                                      detail="pool starved")
                        unserved += 1
                        break
                    except SupplyExhausted:
                        ledger.append("unserved", w.id, r, strategy_tag=w.tag,
                                      detail="task supply exhausted")
                        unserved += 1
                        break
                tried.add(batch.peer.source_id)
                tasks, labels = simulate_submission(w, batch, truths, rng)
                task_supply.record(batch.fresh_tasks)
                try:
                    ev = evaluate_submission(batch, (tasks, labels), config, worker_id=w.id)
                except EvaluationAborted as exc:
                    ledger.append("abort", w.id, r, strategy_tag=w.tag,
                                  peer_source_id=batch.peer.source_id, detail=str(exc))
                    batch = None
                    continue
                ledger.append("evaluation", w.id, r, strategy_tag=w.tag,
                              peer_source_id=ev.peer_source_id, evaluation=ev)
                if ev.informative:
                    s_o = batch.shared_tasks.shape[0]
                    admit_to_pool(pool, ev, (tasks[s_o:], labels[s_o:]))
                    ledger.append("admission", w.id, r, strategy_tag=w.tag,
                                  peer_source_id=ev.peer_source_id)
                break
            else:
                ledger.append("unserved", w.id, r, strategy_tag=w.tag,
                              detail="retries exhausted")
                unserved += 1
    return MechanismRun(ledger, pool, task_supply, starved, unserved)
