"""Run configuration: a flat mapping of dotted keys, e.g. ``agent.gamma: 0.99``.

Files are YAML with one dotted key per line. Command-line flags of the same
names (``--agent.gamma 0.95``) override file values. Validation is total:
every bad field is reported at once, before any run starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .agents import ALGORITHMS, AgentConfig
from .envs import ENVIRONMENTS, make_env
from .errors import ConfigError
from .evaluation import GridConfig, SweepConfig
from .train import NoiseConfig


@dataclass
class RunSection:
    algorithm: str = "mmddpg"
    env: str = "point_mass"
    total_steps: int = 50_000
    seed: int = 0
    output_dir: str = "runs"
    checkpoint_every: int = 10_000

    def validate(self):
        problems = []
        if self.algorithm not in ALGORITHMS:
            problems.append(("run.algorithm", f"must be one of {', '.join(ALGORITHMS)}"))
        if self.env not in ENVIRONMENTS:
            problems.append(("run.env", f"must be one of {', '.join(ENVIRONMENTS)}"))
        if self.total_steps < 0:
            problems.append(("run.total_steps", "must be >= 0"))
        if self.checkpoint_every < 1:
            problems.append(("run.checkpoint_every", "must be >= 1"))
        if not self.output_dir:
            problems.append(("run.output_dir", "must be a non-empty path"))
        return problems


@dataclass
class EnvSection:
    """Physics and episode overrides; ``None`` keeps the environment's own default."""

    dt: float = None
    horizon: int = None
    action_bound: float = None
    disturbance_bound: float = None
    masses: tuple = None
    lengths: tuple = None
    damping: float = None
    gear: float = None
    cost_offset: float = None
    action_penalty: float = None


@dataclass
class EvalSection:
    means: tuple = SweepConfig.means
    stds: tuple = SweepConfig.stds
    episodes_per_cell: int = 100
    grid_episodes_per_cell: int = 50
    damping_scales: tuple = GridConfig.damping_scales
    gear_scales: tuple = GridConfig.gear_scales
    gamma: float = 0.99
    clamp: bool = True
    seeds: tuple = (0, 1, 2, 3, 4)

    def sweep(self):
        return SweepConfig(tuple(self.means), tuple(self.stds), int(self.episodes_per_cell),
                           self.gamma, tuple(self.seeds), self.clamp)

    def grid(self):
        return GridConfig(tuple(self.damping_scales), tuple(self.gear_scales),
                          int(self.grid_episodes_per_cell), self.gamma, tuple(self.seeds))


SECTIONS = {"run": RunSection, "agent": AgentConfig, "noise": NoiseConfig,
            "env": EnvSection, "eval": EvalSection}

# declared element types for keys whose defaults do not reveal them
_TYPES = {
    "agent.hidden_sizes": (tuple, int),
    "env.dt": float, "env.horizon": int, "env.action_bound": float,
    "env.disturbance_bound": float, "env.masses": (tuple, float), "env.lengths": (tuple, float),
    "env.damping": float, "env.gear": float, "env.cost_offset": float,
    "env.action_penalty": float,
    "eval.means": (tuple, float), "eval.stds": (tuple, float),
    "eval.damping_scales": (tuple, float), "eval.gear_scales": (tuple, float),
    "eval.seeds": (tuple, int),
}


def _key_type(section, f):
    key = f"{section}.{f.name}"
    if key in _TYPES:
        return _TYPES[key]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    return type(default)


def known_keys():
    return [f"{s}.{f.name}" for s, cls in SECTIONS.items() for f in fields(cls)]


def _coerce(key, kind, value):
    """Convert ``value`` to ``kind``; returns ``(value, problem or None)``."""
    if value is None:
        return None, None
    try:
        if isinstance(kind, tuple):
            _, elem = kind
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                value = [value]
            return tuple(_scalar(elem, v) for v in value), None
        return _scalar(kind, value), None
    except (TypeError, ValueError) as exc:
        return None, (key, f"bad value {value!r}: {exc}")


def _scalar(kind, v):
    if kind is bool:
        if isinstance(v, bool):
            return v
        if isinstance(v, str) and v.lower() in ("true", "false", "yes", "no", "1", "0"):
            return v.lower() in ("true", "yes", "1")
        raise ValueError("expected a boolean")
    if kind is int:
        if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
            raise ValueError("expected an integer")
        return int(v)
    if kind is float:
        if isinstance(v, bool):
            raise ValueError("expected a number")
        return float(v)
    if kind is str:
        if not isinstance(v, str):
            raise ValueError("expected a string")
        return v
    raise TypeError(f"unsupported type {kind}")


def flatten(mapping, prefix=""):
    """Nested mappings to dotted keys; already-dotted keys pass through."""
    out = {}
    for k, v in mapping.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    agent: AgentConfig = field(default_factory=AgentConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    env: EnvSection = field(default_factory=EnvSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_mapping(cls, mapping):
        """Build from dotted keys; raises :class:`ConfigError` listing every problem."""
        flat = flatten(mapping or {})
        problems = []
        values = {s: {} for s in SECTIONS}
        typed = {f"{s}.{f.name}": (s, f) for s, c in SECTIONS.items() for f in fields(c)}
        for key, raw in flat.items():
            if key not in typed:
                problems.append((key, "unknown key"))
                continue
            section, f = typed[key]
            v, problem = _coerce(key, _key_type(section, f), raw)
            if problem:
                problems.append(problem)
            elif v is not None or section == "env":
                values[section][f.name] = v
        cfg = cls(**{s: SECTIONS[s](**values[s]) for s in SECTIONS})
        try:
            cfg.validate()
        except ConfigError as exc:
            problems.extend(exc.problems)
        if problems:
            raise ConfigError(problems)
        return cfg

    def to_mapping(self):
        out = {}
        for s in SECTIONS:
            sec = getattr(self, s)
            for f in fields(sec):
                v = getattr(sec, f.name)
                out[f"{s}.{f.name}"] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, overrides):
        merged = self.to_mapping()
        merged.update(flatten(overrides))
        return RunConfig.from_mapping(merged)

    def validate(self):
        problems = list(self.run.validate())
        for section in (self.agent, self.noise):
            try:
                section.validate()
            except ConfigError as exc:
                problems.extend(exc.problems)
        for getter in (self.eval.sweep, self.eval.grid):
            try:
                getter().validate()
            except ConfigError as exc:
                problems.extend(p for p in exc.problems if p not in problems)
        if not self.eval.seeds:
            problems.append(("eval.seeds", "need at least one seed"))
        if self.run.env in ENVIRONMENTS:
            try:
                self.build_env()
            except ConfigError as exc:
                problems.extend(exc.problems)
            except (TypeError, ValueError) as exc:
                problems.append(("env", str(exc)))
        if problems:
            raise ConfigError(problems)
        return self

    def build_env(self):
        """Environment for ``run.env`` with any ``env.*`` overrides applied."""
        base = make_env(self.run.env)
        e = self.env
        spec_changes = {k: getattr(e, k) for k in ("dt", "horizon", "action_bound",
                                                    "disturbance_bound")
                        if getattr(e, k) is not None}
        param_changes = {k: getattr(e, k) for k in ("masses", "lengths", "damping", "gear",
                                                     "cost_offset", "action_penalty")
                         if getattr(e, k) is not None}
        spec = dataclasses.replace(base.spec, **spec_changes) if spec_changes else base.spec
        params = dataclasses.replace(base.params, **param_changes) if param_changes else base.params
        if not (spec_changes or param_changes):
            return base
        return type(base)(spec=spec, params=params, init=base.init)


def load_config(path=None, overrides=None):
    """Defaults, then the YAML file at ``path``, then ``overrides``."""
    mapping = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError([("--config", f"cannot read {path}: {exc.strerror}")]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([("--config", f"{path} is not valid YAML: {exc}")]) from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([("--config", f"{path} must hold a mapping of dotted keys")])
        mapping.update(flatten(loaded))
    mapping.update(flatten(overrides or {}))
    return RunConfig.from_mapping(mapping)


def dump_config(cfg):
    """YAML text with one dotted key per line, sorted."""
    return yaml.safe_dump(cfg.to_mapping(), sort_keys=True, default_flow_style=None)

