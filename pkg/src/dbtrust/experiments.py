"""Seeded experiment harness.

Four experiments, each a pure function of an :class:`ExperimentConfig`:

* :func:`run_reward_distribution` - rewards of a mixed population of
  truthful, heuristic and permutation workers hired in rounds.
* :func:`run_shared_task_sweep` - the same, repeated over several numbers of
  shared tasks, summarized as mean and spread across repeats.
* :func:`run_dominance_check` - truthful reporting against a panel of
  deviations for probe workers, under several fixed populations of peers.
* :func:`run_fairness_check` - one probe worker scored against peers of very
  different quality and strategy.

Repeat ``i`` draws from ``SeedSequence([seed, ..., i])``, so repeats are
independent, can run in any order or in parallel, and the output does not
depend on how many run at once.
"""

from __future__ import annotations

import itertools
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .agents import (
    ProficiencySpec,
    WorkerSpec,
    make_workers,
    random_mixed_strategy,
    sample_ground_truths,
    sample_proficiency,
    simulate_answers,
)
from .config import ExperimentConfig
from .mechanism import (
    ORACLE_ID,
    Batch,
    EvaluationAborted,
    MechanismConfig,
    MechanismRun,
    PoolEntry,
    TaskSupply,
    beta_bound,
    evaluate_submission,
    own_coefficients_informative,
    run_mechanism,
)
from .model import WorkerStrategy, compose_trust, permutation_matrix, sample_rows

TAG_ORDER = ("truthful", "heuristic", "permutation")


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _map(fn, items, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, items))


def simulate_run(config: ExperimentConfig, rng: np.random.Generator,
                 mechanism: Optional[MechanismConfig] = None) -> MechanismRun:
    """One full mechanism run: gold tasks, hired rounds of workers, fresh tasks.

    The oracle answers ``s_o`` gold tasks (ids ``0 .. s_o-1``) with identity
    trust; fresh tasks follow.  The fresh-task supply is sized so it cannot
    run dry before the worker stream does.
    """
    mech = mechanism or config.mechanism
    s_o, s_n = mech.s_o, mech.s_n
    batches = config.total_workers * (1 + mech.max_retries)
    n_fresh = max(s_n, -(-s_n * batches // mech.target_answers))
    truths = sample_ground_truths(s_o + n_fresh, mech.prior, rng)
    rounds, start = [], 0
    for size in config.rounds:
        rounds.append(make_workers(size, config.proficiency, config.strategy_mix, rng,
                                   start=start, heuristic_report=config.heuristic_report,
                                   permutation=config.permutation))
        start += size
    supply = TaskSupply(n_fresh, mech.target_answers, first_id=s_o)
    oracle = (np.arange(s_o), truths[:s_o])
    return run_mechanism(mech, rounds, supply, truths, rng, oracle_answers=oracle)


# -- reward distribution / sweep --------------------------------------------------

LEDGER_HEADER = ("repeat", "shared_tasks", "seq", "worker_id", "strategy_tag",
                 "peer_source_id", "reward", "trace_raw", "informative", "shared_task_count")
SUMMARY_HEADER = ("strategy_tag", "shared_tasks", "mean_reward", "std_reward", "n")


@dataclass(frozen=True)
class SummaryRow:
    strategy_tag: str
    shared_tasks: int
    mean_reward: float
    std_reward: float
    n: int

    def as_tuple(self):
        return (self.strategy_tag, self.shared_tasks, self.mean_reward, self.std_reward, self.n)


@dataclass
class RewardSamples:
    """Per-evaluation records of one or more runs."""

    rows: List[tuple] = field(default_factory=list)
    runs: List[dict] = field(default_factory=list)  # per-run {tag: rewards}
    oracle_evaluations: List[int] = field(default_factory=list)
    unserved: List[int] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)  # wall time, never written out

    def by_tag(self) -> Dict[str, np.ndarray]:
        out = {}
        for run in self.runs:
            for tag, r in run.items():
                out.setdefault(tag, []).append(r)
        return {t: np.concatenate(v) for t, v in sorted(out.items())}

    def run_means(self, tag) -> np.ndarray:
        return np.array([r[tag].mean() for r in self.runs if tag in r and r[tag].size])


def _std(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def _one_run(args):
    config, mech, key = args
    start = time.perf_counter()
    run = simulate_run(config, _rng(*key), mech)
    rows = [(key[-1], mech.s_o) + tuple(r) for r in run.ledger.rows()]
    return (rows, run.ledger.rewards_by_tag(), run.oracle_evaluations, run.unserved_workers,
            time.perf_counter() - start)


def _collect(results) -> RewardSamples:
    out = RewardSamples()
    for rows, by_tag, n_oracle, unserved, seconds in results:
        out.rows.extend(rows)
        out.runs.append(by_tag)
        out.oracle_evaluations.append(n_oracle)
        out.unserved.append(unserved)
        out.seconds.append(seconds)
    return out


def run_reward_distribution(config: ExperimentConfig, n_jobs: int = 1) -> RewardSamples:
    """Every evaluation's (strategy tag, reward) over ``config.repeats`` runs."""
    jobs = [(config, config.mechanism, (config.seed, 0, i)) for i in range(config.repeats)]
    return _collect(_map(_one_run, jobs, n_jobs))


def summarize_pooled(samples: RewardSamples, shared_tasks: int) -> List[SummaryRow]:
    """Mean and sample std of individual rewards, per strategy tag."""
    rows = []
    for tag, r in samples.by_tag().items():
        rows.append(SummaryRow(tag, shared_tasks, float(r.mean()), _std(r), int(r.size)))
    return rows


@dataclass
class SweepResult:
    summary: List[SummaryRow]
    samples: Dict[int, RewardSamples]

    def row(self, tag, shared_tasks) -> SummaryRow:
        return next(r for r in self.summary
                    if r.strategy_tag == tag and r.shared_tasks == shared_tasks)


def summarize_runs(samples: RewardSamples, shared_tasks: int) -> List[SummaryRow]:
    """Mean and std *across runs* of each run's mean reward, per strategy tag."""
    rows = []
    tags = sorted({t for run in samples.runs for t in run})
    for tag in tags:
        means = samples.run_means(tag)
        if means.size:
            rows.append(SummaryRow(tag, shared_tasks, float(means.mean()), _std(means),
                                   int(means.size)))
    return rows


def run_shared_task_sweep(config: ExperimentConfig, n_jobs: int = 1) -> SweepResult:
    """Repeat full runs at each shared-task count; fresh tasks per batch match it."""
    if not config.shared_task_sweep:
        raise ValueError("shared_task_sweep is empty")
    summary, samples = [], {}
    for s in config.shared_task_sweep:
        mech = replace(config.mechanism, s_o=s, s_n=s)
        jobs = [(config, mech, (config.seed, 1, s, i)) for i in range(config.repeats)]
        samples[s] = _collect(_map(_one_run, jobs, n_jobs))
        summary.extend(summarize_runs(samples[s], s))
    return SweepResult(summary, samples)


# -- dominance --------------------------------------------------------------------

def column_dominant(a) -> bool:
    """``A[g, g] > A[g', g]`` for every ``g' != g``."""
    a = np.asarray(a)
    d = np.diag(a)
    off = a + np.diag(np.full(a.shape[0], -np.inf))
    return bool(np.all(d > off.max(axis=0)))


def row_dominant(a) -> bool:
    """``A[g, g] > A[g, g']`` for every ``g' != g``; for k=2 each diagonal exceeds 1/2."""
    a = np.asarray(a)
    d = np.diag(a)
    off = a + np.diag(np.full(a.shape[0], -np.inf))
    return bool(np.all(d > off.max(axis=1)))


def strategy_panel(k: int, rng: np.random.Generator, n_mixtures: int = 5) -> Dict[str, WorkerStrategy]:
    """Truthful plus every non-identity permutation, random mixtures and three heuristics."""
    panel = {"truthful": WorkerStrategy.truthful(k)}
    for perm in itertools.permutations(range(k)):
        if list(perm) != list(range(k)):
            panel["perm" + "".join(map(str, perm))] = WorkerStrategy.permutation(perm)
    for i in range(n_mixtures):
        panel[f"mixture{i}"] = random_mixed_strategy(k, rng)
    point = np.zeros(k)
    point[0] = 1.0
    panel["heuristic-uniform"] = WorkerStrategy.heuristic(np.full(k, 1.0 / k))
    panel["heuristic-constant"] = WorkerStrategy.heuristic(point)
    vec = rng.dirichlet(np.ones(k))
    vec[-1] = 1.0 - vec[:-1].sum()
    panel["heuristic-random"] = WorkerStrategy.heuristic(np.clip(vec, 0, 1))
    return panel


def _report(strategy: WorkerStrategy, observed, rng):
    if strategy.effort:
        if np.array_equal(strategy.report_matrix, np.eye(strategy.k)):
            return observed
        return sample_rows(strategy.report_matrix, observed, rng)
    return sample_rows(strategy.report_vector[None, :], np.zeros_like(observed), rng)


def _peer_strategy(profile: str, k: int, rng) -> WorkerStrategy:
    if profile == "truthful":
        return WorkerStrategy.truthful(k)
    if profile == "permutation":
        return WorkerStrategy(True, report_matrix=permutation_matrix((np.arange(k) + 1) % k))
    if profile == "mixed":
        return random_mixed_strategy(k, rng)
    raise ValueError(f"unknown population profile {profile!r}")


def _estimate_peer_trust(peer: WorkerSpec, mech: MechanismConfig, n_shared: int, rng):
    """Score a peer against the gold oracle, as the mechanism's first round would."""
    g = sample_ground_truths(n_shared, mech.prior, rng)
    entry = PoolEntry(ORACLE_ID, np.eye(mech.k), np.arange(n_shared), g)
    batch = Batch(np.arange(n_shared), np.empty(0, np.int64), entry, g)
    ev = evaluate_submission(batch, (batch.tasks, simulate_answers(peer, g, rng)), mech,
                             worker_id=peer.id)
    return ev


@dataclass(frozen=True)
class DominanceRow:
    probe: int
    profile: str
    peer: str
    strategy: str
    mean_reward: float
    net_utility: float
    margin: float  # truthful mean minus this strategy's mean
    condition_met: bool
    n: int


@dataclass
class DominanceReport:
    rows: List[DominanceRow]
    probes: List[np.ndarray]
    warnings: List[str]

    def failures(self) -> List[DominanceRow]:
        return [r for r in self.rows
                if r.condition_met and r.strategy != "truthful" and not r.margin > 0]

    @property
    def passed(self) -> bool:
        return not self.failures()


def run_dominance_check(config: ExperimentConfig, *, probes: Optional[Sequence] = None,
                        n_probes: int = 20, shared_tasks: int = 10_000,
                        profiles: Sequence[str] = ("truthful", "permutation", "mixed"),
                        peers_per_profile: int = 2, n_mixtures: int = 5,
                        repeats: Optional[int] = None) -> DominanceReport:
    """Truthful versus a panel of uniform deviations, peers' strategies held fixed.

    For each probe (random column-dominant proficiency unless ``probes`` is
    given) and each informative peer, every repeat draws one set of ground
    truths, peer answers and probe observations; all panel strategies report
    from the same observations, which keeps the comparison paired.
    """
    mech = config.mechanism
    k = mech.k
    repeats = config.repeats if repeats is None else repeats
    rng = _rng(config.seed, 2)
    notes = []
    if probes is None:
        probes = []
        while len(probes) < n_probes:
            a = sample_proficiency(config.proficiency, rng)
            if column_dominant(a):
                probes.append(a)
    probes = [np.asarray(a, dtype=float) for a in probes]

    peers = []
    for profile in profiles:
        made = 0
        for _attempt in range(50 * peers_per_profile):
            if made == peers_per_profile:
                break
            strat = _peer_strategy(profile, k, rng)
            tag = profile if profile in ("truthful", "permutation") else "mixed"
            peer = WorkerSpec(f"{profile}-peer{made}", sample_proficiency(config.proficiency, rng),
                              strat, tag)
            try:
                ev = _estimate_peer_trust(peer, mech, shared_tasks, rng)
            except EvaluationAborted:
                continue
            if not ev.informative:
                notes.append(f"{peer.id}: uninformative, resampled")
                continue
            peers.append((profile, peer, ev.projected_trust))
            made += 1

    rows = []
    for p_idx, a in enumerate(probes):
        cond = column_dominant(a)
        weak = k == 2 and a[0, 0] + a[1, 1] > 1
        weak_note = "; the weaker binary condition A[0,0]+A[1,1] > 1 holds" if weak else ""
        if not cond:
            notes.append(f"probe {p_idx}: proficiency is not column-dominant{weak_note}"
                         "; truthful need not win")
        elif not row_dominant(a):
            notes.append(f"probe {p_idx}: some diagonal entry is below another entry of "
                         f"its row (column dominance holds){weak_note}")
        bound = beta_bound(a, mech.cost_of_effort)
        if mech.cost_of_effort > 0 and mech.beta <= bound:
            msg = (f"probe {p_idx}: beta={mech.beta} <= bound {bound:.4g}; "
                   "truthful net utility may be negative")
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        panel = strategy_panel(k, _rng(config.seed, 3, p_idx), n_mixtures)
        for q_idx, (profile, peer, t_peer) in enumerate(peers):
            prng = _rng(config.seed, 4, p_idx, q_idx)
            entry = PoolEntry(peer.id, t_peer, np.arange(shared_tasks),
                              np.zeros(shared_tasks, np.intp))
            rewards = {name: [] for name in panel}
            for _ in range(repeats):
                g = sample_ground_truths(shared_tasks, mech.prior, prng)
                yj = simulate_answers(peer, g, prng)
                batch = Batch(entry.tasks, np.empty(0, np.int64), entry, yj)
                x = sample_rows(a, g, prng)
                for name, strat in panel.items():
                    y = _report(strat, x, prng)
                    try:
                        ev = evaluate_submission(batch, (batch.tasks, y), mech)
                    except EvaluationAborted:
                        continue
                    rewards[name].append(ev.reward)
            means = {n: float(np.mean(r)) if r else float("nan") for n, r in rewards.items()}
            for name, strat in panel.items():
                cost = mech.cost_of_effort if strat.effort else 0.0
                rows.append(DominanceRow(p_idx, profile, peer.id, name, means[name],
                                         means[name] - cost,
                                         means["truthful"] - means[name], cond,
                                         len(rewards[name])))
    return DominanceReport(rows, probes, notes)


# -- fairness ---------------------------------------------------------------------

@dataclass(frozen=True)
class PeerArchetype:
    name: str
    proficiency: np.ndarray
    strategy: WorkerStrategy

    @property
    def trust(self) -> np.ndarray:
        return compose_trust(self.proficiency, self.strategy)


def default_peer_archetypes() -> List[PeerArchetype]:
    """Binary peers whose trust traces span 1.2 to 2.0, plus one that only guesses."""
    eye = np.eye(2)
    return [
        PeerArchetype("weak-truthful", np.array([[0.6, 0.4], [0.4, 0.6]]),
                      WorkerStrategy.truthful(2)),
        PeerArchetype("poor-permuting", np.array([[0.25, 0.75], [0.75, 0.25]]),
                      WorkerStrategy.permutation([1, 0])),
        PeerArchetype("noisy-mixed", np.array([[0.95, 0.05], [0.1, 0.9]]),
                      WorkerStrategy.mixed([[0.9, 0.1], [0.2, 0.8]])),
        PeerArchetype("strong-truthful", np.array([[0.9, 0.1], [0.1, 0.9]]),
                      WorkerStrategy.truthful(2)),
        PeerArchetype("gold", eye, WorkerStrategy.truthful(2)),
        PeerArchetype("heuristic", eye, WorkerStrategy.heuristic([0.5, 0.5])),
    ]


@dataclass(frozen=True)
class FairnessRow:
    peer: str
    peer_trace: float
    applicable: bool
    mean_reward: float
    std_reward: float
    n: int


@dataclass
class FairnessReport:
    rows: List[FairnessRow]
    probe_reward_limit: float

    @property
    def spread(self) -> float:
        means = [r.mean_reward for r in self.rows if r.applicable]
        return float(max(means) - min(means))


def run_fairness_check(config: ExperimentConfig, *, probe_proficiency=None,
                       probe_strategy: Optional[WorkerStrategy] = None,
                       peers: Optional[Sequence[PeerArchetype]] = None,
                       shared_tasks: int = 2000,
                       repeats: Optional[int] = None) -> FairnessReport:
    """Mean reward of one probe worker against each informative peer archetype.

    Peer entries carry their exact trust, so an archetype is usable when it
    passes the solver's full-rank gate (``condition_threshold``); the tighter
    admission gate is meant for noisy estimates.  Each repeat shares
    ground truths and probe answers across archetypes; only the peer's
    answers differ.  Uninformative archetypes are reported as not applicable.
    """
    mech = config.mechanism
    k = mech.k
    repeats = config.repeats if repeats is None else repeats
    a = np.array([[0.8, 0.2], [0.3, 0.7]]) if probe_proficiency is None else probe_proficiency
    strat = WorkerStrategy.truthful(k) if probe_strategy is None else probe_strategy
    probe = WorkerSpec("probe", a, strat, "mixed" if strat.effort else "heuristic")
    peers = default_peer_archetypes() if peers is None else list(peers)

    usable = []
    for p in peers:
        ok, _ = own_coefficients_informative(p.trust, mech.prior, mech.condition_threshold)
        usable.append(ok)
    rng = _rng(config.seed, 5)
    rewards = [[] for _ in peers]
    for _ in range(repeats):
        g = sample_ground_truths(shared_tasks, mech.prior, rng)
        yi = simulate_answers(probe, g, rng)
        tasks = np.arange(shared_tasks)
        for idx, p in enumerate(peers):
            if not usable[idx]:
                continue
            yj = sample_rows(p.trust, g, rng)
            entry = PoolEntry(p.name, p.trust, tasks, yj)
            batch = Batch(tasks, np.empty(0, np.int64), entry, yj)
            try:
                rewards[idx].append(evaluate_submission(batch, (tasks, yi), mech).reward)
            except EvaluationAborted:
                pass
    rows = []
    for p, ok, r in zip(peers, usable, rewards):
        r = np.asarray(r)
        rows.append(FairnessRow(p.name, float(np.trace(p.trust)), ok,
                                float(r.mean()) if r.size else float("nan"),
                                _std(r) if r.size else float("nan"), int(r.size)))
    limit = mech.beta * (float(np.trace(probe.trust)) - 1.0)
    return FairnessReport(rows, limit)
