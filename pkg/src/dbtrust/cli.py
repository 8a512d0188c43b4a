"""Command-line entry point.

    dbtrust solve --pairs PAIRS.csv --peer-trust T.json --prior "[0.5, 0.5]"
    dbtrust simulate --config cfg.json --seed 7 --out runs/one
    dbtrust experiment rewards|sweep|dominance|fairness --config cfg.json --out runs/x
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import experiments as ex
from . import reporting
from .config import ConfigError, ExperimentConfig, config_to_dict, load_config
from .mechanism import own_coefficients_informative
from .model import InvalidInput, reward_score
from .solver import (
    DEFAULT_CONDITION_THRESHOLD,
    NotWellDefined,
    SolverFailure,
    estimate_trust,
    project_stochastic,
)


def _json_arg(value):
    """A JSON literal, or the path of a file holding one."""
    if os.path.exists(value):
        with open(value) as fh:
            return json.load(fh)
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        raise ConfigError(f"{value!r} is neither a file nor valid JSON") from None


def _read_pairs(path):
    """Two integer columns, worker label then peer label; a header row is optional."""
    pairs = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            try:
                pairs.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ConfigError(f"{path}:{i + 1}: expected two integer labels") from None
    return np.array(pairs, dtype=np.intp).reshape(-1, 2)


def cmd_solve(args):
    t_peer = np.asarray(_json_arg(args.peer_trust), dtype=float)
    k = t_peer.shape[0]
    prior = np.full(k, 1.0 / k) if args.prior is None else np.asarray(_json_arg(args.prior))
    pairs = _read_pairs(args.pairs)
    if pairs.size == 0:
        raise ConfigError(f"{args.pairs}: no answer pairs")
    try:
        raw, coeffs = estimate_trust(pairs[:, 0], pairs[:, 1], t_peer, prior,
                                     condition_threshold=args.threshold,
                                     marginal=args.marginal)
    except (NotWellDefined, SolverFailure) as exc:
        raise RuntimeError(f"cannot solve: {exc}") from None
    projected = project_stochastic(raw)
    informative, _ = own_coefficients_informative(projected, prior, args.threshold)
    out = {"shared_tasks": int(pairs.shape[0]), "raw_trust": raw.tolist(),
           "projected_trust": projected.tolist(), "reward_score": reward_score(raw),
           "peer_condition": coeffs.condition_estimate, "informative": informative}
    print(json.dumps(out, indent=2))
    if args.out:
        reporting.write_json(os.path.join(reporting.ensure_dir(args.out), "solve.json"), out)
    return 0


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, repeats=getattr(args, "repeats", None))


def cmd_simulate(args):
    cfg = _config(args)
    run = ex.simulate_run(cfg, ex._rng(cfg.seed, 0, 0))
    out = reporting.ensure_dir(args.out)
    reporting.write_ledger(os.path.join(out, "ledger.csv"), run.ledger)
    reporting.write_pool(os.path.join(out, "pool.json"), run.pool)
    reporting.write_json(os.path.join(out, "manifest.json"),
                         reporting.manifest("simulate", config_to_dict(cfg), cfg.seed,
                                            coverage=run.coverage,
                                            oracle_evaluations=run.oracle_evaluations))
    ev = run.ledger.evaluations
    print(f"{len(ev)} workers evaluated, {len(run.pool)} pool entries, "
          f"{run.oracle_evaluations} scored on gold tasks; outputs in {out}")
    return 0


def cmd_experiment(args):
    cfg = _config(args)
    out = reporting.ensure_dir(args.out)
    name = args.which
    extra = {}
    if name == "rewards":
        samples = ex.run_reward_distribution(cfg, n_jobs=args.jobs)
        summary = ex.summarize_pooled(samples, cfg.mechanism.s_o)
        reporting.write_csv(os.path.join(out, "rewards_ledger.csv"), ex.LEDGER_HEADER,
                            samples.rows)
        reporting.write_summary(os.path.join(out, "rewards_summary.csv"), summary)
        for r in summary:
            print(f"{r.strategy_tag:12s} mean {r.mean_reward:+.4f}  std {r.std_reward:.4f}  n {r.n}")
    elif name == "sweep":
        res = ex.run_shared_task_sweep(cfg, n_jobs=args.jobs)
        rows = [row for s in cfg.shared_task_sweep for row in res.samples[s].rows]
        reporting.write_csv(os.path.join(out, "sweep_ledger.csv"), ex.LEDGER_HEADER, rows)
        reporting.write_summary(os.path.join(out, "sweep_summary.csv"), res.summary)
        for r in res.summary:
            print(f"s_o={r.shared_tasks:<5d} {r.strategy_tag:12s} "
                  f"mean {r.mean_reward:+.4f}  std {r.std_reward:.4f}  runs {r.n}")
    elif name == "dominance":
        rep = ex.run_dominance_check(cfg)
        fields = list(ex.DominanceRow.__dataclass_fields__)
        reporting.write_csv(os.path.join(out, "dominance.csv"), fields,
                            (tuple(asdict(r).values()) for r in rep.rows))
        extra = {"notes": rep.warnings, "passed": rep.passed}
        fails = rep.failures()
        print(f"{len(rep.probes)} probes, {len(rep.rows)} comparisons, "
              f"{len(fails)} where a deviation matched or beat truthful")
        for note in rep.warnings:
            print("note:", note)
    elif name == "fairness":
        rep = ex.run_fairness_check(cfg)
        fields = list(ex.FairnessRow.__dataclass_fields__)
        reporting.write_csv(os.path.join(out, "fairness.csv"), fields,
                            (tuple(asdict(r).values()) for r in rep.rows))
        extra = {"spread": rep.spread, "probe_reward_limit": rep.probe_reward_limit}
        for r in rep.rows:
            tail = f"mean {r.mean_reward:+.4f}" if r.applicable else "not applicable"
            print(f"{r.peer:16s} trace {r.peer_trace:.3f}  {tail}")
        print(f"spread {rep.spread:.4f}")
    reporting.write_json(os.path.join(out, "manifest.json"),
                         reporting.manifest(f"experiment {name}", config_to_dict(cfg),
                                            cfg.seed, **extra))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbtrust",
                                description="transitive-trust crowdsourcing mechanism simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a worker's trust from answer pairs")
    s.add_argument("--pairs", required=True,
                   help="CSV of worker_label,peer_label rows on shared tasks")
    s.add_argument("--peer-trust", required=True, help="peer trust matrix (JSON or file)")
    s.add_argument("--prior", help="ground-truth prior (JSON or file); default uniform")
    s.add_argument("--threshold", type=float, default=DEFAULT_CONDITION_THRESHOLD)
    s.add_argument("--marginal", choices=("empirical", "model"), default="empirical")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    def common(sp, repeats=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output directory")
        if repeats:
            sp.add_argument("--repeats", type=int)

    m = sub.add_parser("simulate", help="one mechanism run")
    common(m, repeats=False)
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a packaged experiment")
    e.add_argument("which", choices=("rewards", "sweep", "dominance", "fairness"))
    common(e)
    e.add_argument("--jobs", type=int, default=1, help="parallel processes for repeats")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInput, OSError) as exc:
        print(f"dbtrust: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level diagnostic
        print(f"dbtrust: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
