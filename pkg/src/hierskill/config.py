"""Run configuration: typed dataclass tree loaded from YAML with strict validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .competence import EstimatorConfig
from .highlevel import HLConfig
from .lowlevel import LLConfig
from .orchestrator import RunBudgets
from .sampler import SamplerConfig


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path, self.line = path, line
        where = path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


@dataclass
class WorldConfig:
    side: int = 32


@dataclass
class EvalConfig:
    every_cycles: int = 1
    n_seeds: int = 40
    greedy: bool = True
    # low-level decoding at eval time; None follows `greedy`
    ll_greedy: bool | None = None
    goals: list[str] | None = None
    threshold: float = 0.8
    # stop once this goal is mastered and `extra_evals` more evaluations ran
    stop_after_mastery: str | None = None
    extra_evals: int = 3


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    flat_baseline: bool = False
    goals: list[str] | None = None
    max_env_steps: int = 10_000_000
    max_cycles: int | None = None
    checkpoint_every_cycles: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    budgets: RunBudgets = field(default_factory=RunBudgets)
    hl: HLConfig = field(default_factory=HLConfig)
    ll: LLConfig = field(default_factory=LLConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# fields excluded from the checkpoint compatibility hash
RUN_CONTROL = ("out_dir", "max_env_steps", "max_cycles")

DESK_SCALE = {
    "budgets": {"envs_parallel": 8, "cycle_size": 1024},
    "hl": {"lr": 3e-4, "minibatch": 128},
    "ll": {"update_every": 1024},
    "eval": {"ll_greedy": False},
}

_POSITIVE = {
    "world.side": 7, "max_env_steps": 1, "checkpoint_every_cycles": 1, "eval.every_cycles": 1, "eval.n_seeds": 1,
    "hl.hidden": 1, "hl.token_embed": 1, "hl.epochs": 1, "hl.minibatch": 1, "ll.buffer_size": 1,
    "ll.update_every": 1, "ll.grad_steps": 1, "ll.batch_size": 1, "estimator.update_every": 1,
    "estimator.batch_size": 1, "estimator.epochs": 1, "estimator.cycles_kept": 1,
    "estimator.samples_per_execution": 1, "sampler.entries_per_attempt": 1, "sampler.update_every": 1,
    "sampler.ring_size": 2, "sampler.eps_horizon": 1, "max_cycles": 0, "eval.extra_evals": 0,
}
_UNIT = ("hl.gamma", "hl.lam", "ll.gamma", "eval.threshold", "sampler.eps0")
_RATES = ("hl.lr", "ll.lr", "estimator.lr", "sampler.lr", "ll.beta", "ll.max_weight", "sampler.eps_rate",
          "hl.clip")
_NONNEG = ("hl.entropy_coef", "hl.kl_coef", "hl.vf_coef", "hl.max_grad_norm", "ll.critic_coef")


def _check_ranges(cfg: RunConfig, lines: dict[str, int]) -> None:
    def get(path):
        obj = cfg
        for part in path.split("."):
            obj = getattr(obj, part)
        return obj

    def fail(path, msg):
        raise ConfigError(msg, path, lines.get(path))

    for path, lo in _POSITIVE.items():
        v = get(path)
        if v is not None and v < lo:
            fail(path, f"must be >= {lo}, got {v}")
    for path in _UNIT:
        if not 0.0 <= get(path) <= 1.0:
            fail(path, f"must lie in [0, 1], got {get(path)}")
    for path in _RATES:
        if get(path) <= 0:
            fail(path, f"must be > 0, got {get(path)}")
    for path in _NONNEG:
        if get(path) < 0:
            fail(path, f"must be >= 0, got {get(path)}")
    for path in ("ll.conv_channels", "ll.fc_sizes", "estimator.hidden", "sampler.hidden", "hl.value_hidden"):
        if any(w <= 0 for w in get(path)):
            fail(path, "layer widths must be positive")
    from .goalspace import default_catalog

    known = {g.text for g in default_catalog().achievements}
    for path in ("goals", "eval.goals"):
        v = get(path)
        if v is not None:
            bad = sorted(set(v) - known)
            if bad or not v:
                fail(path, f"unknown goals {bad}" if bad else "goal list is empty")
    if cfg.eval.stop_after_mastery is not None and cfg.eval.stop_after_mastery not in known:
        fail("eval.stop_after_mastery", f"unknown goal {cfg.eval.stop_after_mastery!r}")


def _coerce(value: Any, tp: Any, path: str, lines: dict[str, int]) -> Any:
    def fail(msg):
        raise ConfigError(msg, path, lines.get(path))

    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            fail("must not be null")
        (inner,) = [a for a in args if a is not type(None)]
        return _coerce(value, inner, path, lines)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            fail(f"expected a mapping, got {type(value).__name__}")
        return _build(tp, value, path, lines)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            fail(f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        variadic = origin is list or (len(args) == 2 and args[1] is Ellipsis)
        if not variadic:
            if len(value) != len(args):
                fail(f"expected {len(args)} items, got {len(value)}")
            return tuple(_coerce(v, a, f"{path}[{i}]", lines) for i, (v, a) in enumerate(zip(value, args)))
        out = [_coerce(v, args[0], f"{path}[{i}]", lines) for i, v in enumerate(value)]
        return tuple(out) if origin is tuple else out
    if tp is bool:
        if not isinstance(value, bool):
            fail(f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            fail(f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            fail(f"expected a string, got {value!r}")
        return value
    fail(f"unsupported field type {tp}")


def _build(cls, data: dict, prefix: str, lines: dict[str, int]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            path = f"{prefix}.{key}" if prefix else str(key)
            raise ConfigError("unknown key", path, lines.get(path))
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        kwargs[key] = _coerce(value, hints[key], path, lines)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), prefix, lines.get(prefix)) from None


def _key_lines(node: yaml.Node | None, prefix: str = "", out: dict[str, int] | None = None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def from_dict(data: dict | None, lines: dict[str, int] | None = None) -> RunConfig:
    lines = lines or {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    cfg = _build(RunConfig, data, "", lines)
    _check_ranges(cfg, lines)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    def plain(x):
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        return x

    return plain(dataclasses.asdict(cfg))


def loads(text: str, overrides: dict | None = None) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None)
    if overrides:
        data = merge(data or {}, overrides)
    return from_dict(data, _key_lines(node))


def load(path: str | Path, overrides: dict | None = None) -> RunConfig:
    return loads(Path(path).read_text(), overrides)


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def config_hash(cfg: RunConfig) -> str:
    d = to_dict(cfg)
    for k in RUN_CONTROL:
        d.pop(k)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
