"""Experiment configuration and its JSON representation.

Config files use the field names of :class:`ExperimentConfig` verbatim.
Missing fields take the defaults below; unknown fields are an error so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from .agents import ProficiencySpec
from .mechanism import MechanismConfig
from .model import InvalidInput, probability_vector


class ConfigError(InvalidInput):
    pass


def default_mechanism() -> MechanismConfig:
    """Mechanism settings used by the experiments.

    500 shared tasks per batch and fan-out 5.  Admission to the pool needs a
    posterior condition number of at most 3: tight enough that heuristic
    answers, whose estimated trust only looks informative through sampling
    noise, stay out.  The solve itself keeps the plain full-rank gate.
    """
    return MechanismConfig(k_fanout=5, s_o=500, s_n=500, beta=1.0, admission_threshold=3.0)


@dataclass
class ExperimentConfig:
    mechanism: MechanismConfig = field(default_factory=default_mechanism)
    proficiency: ProficiencySpec = field(default_factory=ProficiencySpec)
    rounds: Tuple[int, ...] = (5, 25, 125, 625)
    strategy_mix: Tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    shared_task_sweep: Tuple[int, ...] = (10, 30, 100, 300)
    repeats: int = 100
    seed: int = 0
    heuristic_report: Optional[Tuple[float, ...]] = None
    permutation: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.rounds = tuple(int(r) for r in self.rounds)
        self.shared_task_sweep = tuple(int(s) for s in self.shared_task_sweep)
        self.strategy_mix = tuple(float(p) for p in self.strategy_mix)
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if not self.rounds or min(self.rounds) < 1:
            raise ConfigError("rounds must be a non-empty list of positive worker counts")
        if len(self.strategy_mix) != 3:
            raise ConfigError("strategy_mix weights (truthful, heuristic, permutation)")
        mix = np.array(self.strategy_mix)
        if abs(mix.sum() - 1.0) > 1e-9:
            raise ConfigError(f"strategy_mix sums to {mix.sum()}, not 1")
        # 1/3 written as a decimal never sums to exactly 1
        mix = np.clip(mix, 0, None)
        mix[-1] = 1.0 - mix[:-1].sum()
        self.strategy_mix = tuple(probability_vector(mix, 3, name="strategy mix").tolist())
        if self.shared_task_sweep and min(self.shared_task_sweep) < 1:
            raise ConfigError("shared_task_sweep entries must be positive")
        if self.proficiency.k != self.mechanism.k:
            raise ConfigError(f"proficiency k={self.proficiency.k} but answer space "
                              f"k={self.mechanism.k}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.heuristic_report is not None:
            self.heuristic_report = tuple(
                probability_vector(self.heuristic_report, self.mechanism.k,
                                   name="heuristic_report").tolist())
        if self.permutation is not None:
            self.permutation = tuple(int(x) for x in self.permutation)
            if sorted(self.permutation) != list(range(self.mechanism.k)):
                raise ConfigError("permutation must rearrange 0..k-1")

    @property
    def total_workers(self) -> int:
        return sum(self.rounds)

    def with_overrides(self, *, seed=None, repeats=None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = seed
        if repeats is not None:
            kw["repeats"] = repeats
        return replace(self, **kw)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(_build(ExperimentConfig, data, "config"))
    try:
        if "mechanism" in data:
            mech = _build(MechanismConfig, data["mechanism"], "mechanism")
            base = asdict(default_mechanism())
            base["answer_space"] = default_mechanism().k
            base.update(mech)
            data["mechanism"] = MechanismConfig(**base)
        if "proficiency" in data:
            data["proficiency"] = ProficiencySpec(**_build(ProficiencySpec, data["proficiency"],
                                                           "proficiency"))
        return ExperimentConfig(**data)
    except ConfigError:
        raise
    except (InvalidInput, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(config: ExperimentConfig) -> dict:
    mech = {f.name: getattr(config.mechanism, f.name) for f in fields(MechanismConfig)}
    mech["answer_space"] = config.mechanism.k
    mech["prior"] = [float(p) for p in config.mechanism.prior]
    out = {
        "mechanism": mech,
        "proficiency": asdict(config.proficiency),
        "rounds": list(config.rounds),
        "strategy_mix": list(config.strategy_mix),
        "shared_task_sweep": list(config.shared_task_sweep),
        "repeats": config.repeats,
        "seed": config.seed,
        "heuristic_report": None if config.heuristic_report is None
        else list(config.heuristic_report),
        "permutation": None if config.permutation is None else list(config.permutation),
    }
    return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


__all__ = ["ExperimentConfig", "ConfigError", "default_mechanism", "config_from_dict",
           "config_to_dict", "load_config"]
