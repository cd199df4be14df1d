"""Experiment configuration: a TOML document with a model and a task list."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import tomli
import tomli_w

from .deviation import ModelSpec
from .distributions import offspring_from_dict, step_from_dict
from .errors import ConfigParseError

TASK_KINDS = ("rates", "sweep", "simulate", "oracle", "strategy", "table")


@dataclass
class ExperimentConfig:
    model: dict
    tasks: list = field(default_factory=list)
    seed: int = 0
    output_dir: str | None = None

    def to_dict(self):
        d = {"seed": self.seed, "model": self.model, "tasks": self.tasks}
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return _canonical(d)

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    @property
    def hash(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def _check_model(model, where="model"):
    for key in ("offspring", "step", "theta", "a"):
        if key not in model:
            raise ConfigParseError(f"{where}: missing key {key!r}")
    if not isinstance(model["offspring"], dict) or not isinstance(model["step"], dict):
        raise ConfigParseError(f"{where}: offspring and step must be tables")
    if "family" not in model["step"]:
        raise ConfigParseError(f"{where}.step: missing key 'family'")


def parse_config(text):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigParseError(f"invalid TOML: {exc}") from exc
    if "model" not in raw:
        raise ConfigParseError("missing [model] table")
    _check_model(raw["model"])
    tasks = raw.get("tasks", [])
    if not isinstance(tasks, list):
        raise ConfigParseError("tasks must be an array of tables")
    for i, t in enumerate(tasks):
        if not isinstance(t, dict) or t.get("kind") not in TASK_KINDS:
            raise ConfigParseError(f"tasks[{i}]: kind must be one of {TASK_KINDS}")
        for j, m in enumerate(t.get("models", [])):
            _check_model(m, f"tasks[{i}].models[{j}]")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigParseError("seed must be a nonnegative integer")
    extra = set(raw) - {"model", "tasks", "seed", "output_dir"}
    if extra:
        raise ConfigParseError(f"unknown top-level keys: {sorted(extra)}")
    return ExperimentConfig(_canonical(raw["model"]), _canonical(tasks), seed, raw.get("output_dir"))


def load_config(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def build_spec(model, validate=True):
    try:
        off = offspring_from_dict(model["offspring"])
        step = step_from_dict(model["step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParseError(f"bad model: {exc}") from exc
    return ModelSpec(off, step, float(model["theta"]), float(model["a"]), validate=validate)
