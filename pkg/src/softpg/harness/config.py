"""Experiment configuration: INI-style key/value files with section headers.

Layout::

    [experiment]
    name = fig2-easy-bernoulli
    T = 100000
    instances = 25
    repeats = 5
    base_seed = 0

    [env]
    kind = bandit          # or mdp
    family = bernoulli
    A = 10
    gap = 0.5

    [algorithm SPG-ESS]
    algorithm = SPG-ESS
    eta0 = 0.0555555

Every ``[algorithm LABEL]`` section becomes one :class:`OptimizerConfig`; its
keys are ``OptimizerConfig`` field names. Section order fixes the algorithm
index used in seed derivation.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .. import bandit as bd
from .. import mdp as md
from ..optimizers import OptimizerConfig

ALGO_PREFIX = "algorithm "
TRACE_POINTS = 1000
ALL_PROPERTIES = ("smoothness", "lojasiewicz", "reversed_lojasiewicz", "sgc", "entropy_assumptions", "two_arm_sgc", "entropy_bias")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvBlock:
    kind: str = "bandit"
    # bandit
    family: str = "bernoulli"
    A: int = 10
    gap: float = 0.5
    std: float = 0.1
    concentration: float = 5.0
    # mdp: built-in names or instance files, one per instance
    names: tuple = ()
    files: tuple = ()


@dataclass(frozen=True)
class VerifyBlock:
    trials: int = 10_000
    bandit_instances: int = 10
    bandit_A: int = 5
    bandit_gap: float = 0.2
    mdps: tuple = ("cliff_world", "deep_sea", "flat_grad")
    small_mdps: int = 20
    properties: tuple = ("all",)

    def __post_init__(self):
        unknown = set(self.properties) - set(ALL_PROPERTIES) - {"all"}
        if unknown:
            raise ConfigError(f"unknown properties {sorted(unknown)}; choose from {list(ALL_PROPERTIES)}")
        for name in self.mdps:
            if name not in md.ENVIRONMENTS:
                raise ConfigError(f"unknown MDP {name!r} in [verify]")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env: EnvBlock = field(default_factory=EnvBlock)
    algorithms: tuple = ()  # ((label, OptimizerConfig), ...)
    instances: int = 25
    repeats: int = 5
    T: int = 100_000
    base_seed: int = 0
    out: str = "results"
    trace_points: int = TRACE_POINTS
    mode: str = "run"
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    source: str = ""

    def __post_init__(self):
        if self.instances < 1 or self.repeats < 1:
            raise ConfigError("instances and repeats must be at least 1")
        if self.mode not in ("run", "verify"):
            raise ConfigError(f"mode must be 'run' or 'verify', got {self.mode!r}")
        if self.mode == "run" and not self.algorithms:
            raise ConfigError(f"{self.name}: no [algorithm ...] sections")
        labels = [lab for lab, _ in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"{self.name}: duplicate algorithm labels")
        if self.repeats >= 1000 or len(self.algorithms) >= 1000:
            raise ConfigError("repeats and algorithm count must stay below 1000 to keep seeds distinct")
        e = self.env
        if e.kind == "bandit":
            if e.family not in bd.FAMILIES:
                raise ConfigError(f"unknown bandit family {e.family!r}")
            if e.A < 2 or not 0 < e.gap < 1:
                raise ConfigError("bandit needs A >= 2 and gap in (0, 1)")
        elif e.kind == "mdp":
            sources = e.names or e.files
            if not sources:
                raise ConfigError("mdp env needs 'names' or 'files'")
            for n in e.names:
                if n not in md.ENVIRONMENTS:
                    raise ConfigError(f"unknown MDP {n!r}; built-ins are {sorted(md.ENVIRONMENTS)}")
            for f in e.files:
                if not Path(f).is_file():
                    raise ConfigError(f"MDP file not found: {f}")
            if self.instances > len(sources):
                raise ConfigError(f"{self.instances} instances requested but only {len(sources)} MDPs listed")
        else:
            raise ConfigError(f"env kind must be 'bandit' or 'mdp', got {e.kind!r}")

    def with_(self, **kw) -> "ExperimentConfig":
        """Copy with overrides; ``T`` is pushed into every algorithm config."""
        cfg = dataclasses.replace(self, **kw)
        if "T" in kw:
            algos = tuple((lab, c.with_(T=kw["T"])) for lab, c in cfg.algorithms)
            cfg = dataclasses.replace(cfg, algorithms=algos)
        return cfg


# ---------------------------------------------------------------- parsing


def _convert(raw: str, tp, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if type(None) in args:
        if raw.lower() in ("", "none"):
            return None
        tp = next(a for a in args if a is not type(None))
    try:
        if tp is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        if tp is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if tp is float:
            return float(raw)
        if tp is tuple or origin is tuple:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc


def _fill(cls, section, where: str, skip=()):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"{where}: unknown key {key!r}")
        out[key] = _convert(raw.strip(), hints[key], f"{where}.{key}")
    return out


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    p.optionxform = str  # keys are case-sensitive (T, A, B1)
    return p


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    p = _parser()
    try:
        p.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "experiment" not in p:
        raise ConfigError(f"{source}: missing [experiment] section")
    exp = dict(p["experiment"])
    top = _fill(ExperimentConfig, exp, "experiment", skip=("env", "algorithms", "verify", "source"))
    if "name" not in top:
        raise ConfigError(f"{source}: experiment needs a name")
    env = EnvBlock(**_fill(EnvBlock, p["env"], "env")) if "env" in p else EnvBlock()
    verify = VerifyBlock(**_fill(VerifyBlock, p["verify"], "verify")) if "verify" in p else VerifyBlock()
    T = top.get("T", ExperimentConfig.T)
    algos = []
    for sec in p.sections():
        if not sec.startswith(ALGO_PREFIX):
            if sec not in ("experiment", "env", "verify"):
                raise ConfigError(f"{source}: unknown section [{sec}]")
            continue
        label = sec[len(ALGO_PREFIX):].strip()
        kw = _fill(OptimizerConfig, p[sec], sec)
        kw.setdefault("algorithm", label)
        kw.setdefault("T", T)
        try:
            algos.append((label, OptimizerConfig(**kw)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}]: {exc}") from exc
    return ExperimentConfig(env=env, verify=verify, algorithms=tuple(algos), source=text, **top)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


# ---------------------------------------------------------------- instances


def instance_env(cfg: ExperimentConfig, i: int):
    """Environment for instance ``i``; bandit means come from a seed derived from ``(base_seed, i)``."""
    import numpy as np

    e = cfg.env
    if e.kind == "bandit":
        rng = np.random.default_rng([cfg.base_seed, i])
        return bd.generate_bandit_instance(e.A, e.gap, e.family, rng, std=e.std, concentration=e.concentration)
    if e.names:
        return md.ENVIRONMENTS[e.names[i]]()
    return md.read_mdp(e.files[i])


def instance_name(cfg: ExperimentConfig, i: int) -> str:
    e = cfg.env
    if e.kind == "bandit":
        return f"bandit{i:03d}"
    return e.names[i] if e.names else Path(e.files[i]).stem
