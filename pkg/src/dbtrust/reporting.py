"""Deterministic output files: delimited ledgers and summaries, JSON manifests."""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from dataclasses import asdict, is_dataclass

import numpy as np

from .experiments import SUMMARY_HEADER, SummaryRow
from .mechanism import Ledger, Pool


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj, indent=2) -> str:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=indent, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if is_dataclass(o):
        return asdict(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_ledger(path, ledger: Ledger) -> str:
    return write_csv(path, Ledger.LEDGER_COLUMNS, ledger.rows())


def write_pool(path, pool: Pool) -> str:
    return write_json(path, pool.snapshot(), indent=None)


def write_summary(path, rows) -> str:
    return write_csv(path, SUMMARY_HEADER, (r.as_tuple() for r in rows))


def manifest(command: str, config_dict: dict, seed: int, **extra) -> dict:
    from . import __version__
    out = {"artifact": "dbtrust", "version": __version__, "command": command,
           "seed": seed, "config": config_dict}
    out.update(extra)
    return out


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def pooled_summary_from_ledger(path):
    """Recompute per-tag pooled reward statistics from a raw experiment ledger."""
    groups = defaultdict(list)
    shared = {}
    for row in read_csv(path):
        groups[row["strategy_tag"]].append(float(row["reward"]))
        shared[row["strategy_tag"]] = int(row["shared_tasks"])
    return [SummaryRow(t, shared[t], float(np.mean(r)), _std(r), len(r))
            for t, r in sorted(groups.items())]


def run_summary_from_ledger(path):
    """Recompute across-run statistics (mean and std of per-run means) from a sweep ledger."""
    groups = defaultdict(list)
    for row in read_csv(path):
        key = (int(row["shared_tasks"]), row["strategy_tag"], int(row["repeat"]))
        groups[key].append(float(row["reward"]))
    per_point = defaultdict(list)
    for (s, tag, rep), r in sorted(groups.items()):
        per_point[(s, tag)].append(float(np.mean(r)))
    return [SummaryRow(tag, s, float(np.mean(m)), _std(m), len(m))
            for (s, tag), m in sorted(per_point.items())]
