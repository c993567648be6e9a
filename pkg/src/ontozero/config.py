"""Run configuration: nested dataclasses, a JSON file, and dotted ``--key=value`` overrides."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .classifier import ClassifierConfig
from .feature_gan import GanConfig
from .imgc import EvalConfig
from .kgc import ExtractorConfig, KGCEvalConfig, KGEConfig
from .onto_encoder import EncoderConfig
from .ontology import ABLATABLE

CONFIG_ENV = "ONTOZERO_CONFIG"
TASKS = ("imgc", "kgc")


class ConfigError(ValueError):
    """Bad config file, unknown key or ill-typed value."""


@dataclass
class Paths:
    data: str = "fixture"
    out: str = "run"
    schema: str = ""
    word_vectors: str = ""
    features: str = ""
    kg: str = ""
    candidates: str = ""

    def resolve(self, name: str, default_rel: str) -> Path:
        value = getattr(self, name)
        return Path(value) if value else Path(self.data) / default_rel


@dataclass
class RunConfig:
    task: str = "imgc"
    mode: str = "standard"
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    ablation: list = field(default_factory=list)
    use_text: bool = True
    paths: Paths = field(default_factory=Paths)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    kge: KGEConfig = field(default_factory=KGEConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    kgc_eval: KGCEvalConfig = field(default_factory=KGCEvalConfig)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.mode not in ("standard", "generalized"):
            raise ConfigError(f"mode must be standard or generalized, got {self.mode!r}")
        if self.task == "kgc" and self.mode != "standard":
            raise ConfigError("generalized mode is only defined for imgc")
        bad = set(self.ablation) - set(ABLATABLE)
        if bad:
            raise ConfigError(f"unknown ablation tags {sorted(bad)}; expected a subset of {list(ABLATABLE)}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every module seed set from the run seed."""
        cfg = copy.deepcopy(self)
        cfg.seed = seed
        for sub in (cfg.encoder, cfg.gan, cfg.eval, cfg.eval.classifier, cfg.kge, cfg.extractor, cfg.kgc_eval):
            sub.seed = seed
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def desk_defaults(task: str) -> RunConfig:
    """Small networks and short schedules that run in seconds on one core."""
    cfg = RunConfig(task=task)
    cfg.encoder = EncoderConfig(dim=16, epochs=300, batch=64, lr=1e-2)
    cfg.eval = EvalConfig(n_syn=100, classifier=ClassifierConfig(lr=1e-2, epochs=20))
    if task == "kgc":
        cfg.gan = GanConfig(noise_dim=15, hidden_g=128, hidden_d=128, lr=1e-3, lambda_cls=1.0, lambda_pivot=3.0,
                            cls_loss="hinge", iterations=600)
    else:
        cfg.gan = GanConfig(noise_dim=16, hidden_g=128, hidden_d=128, lr=1e-3, iterations=600)
    cfg.kge = KGEConfig(dim=32, epochs=100, lr=0.01)
    cfg.extractor = ExtractorConfig(ent_out=16, nbr_out=16, epochs=20, lr=5e-3)
    return cfg


def _coerce(value, current, key: str):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(current, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if isinstance(current, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if isinstance(current, list):
        if isinstance(value, str):
            value = [parse_value(v) for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return list(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported value type")


def set_key(cfg, dotted: str, value) -> None:
    """Assign ``value`` at ``dotted`` path, rejecting unknown keys and wrong types."""
    parts = dotted.split(".")
    obj = cfg
    for i, name in enumerate(parts):
        names = {f.name for f in fields(obj)}
        if name not in names:
            where = ".".join(parts[:i]) or "<root>"
            raise ConfigError(f"unknown config key {dotted!r} (no {name!r} under {where})")
        if i == len(parts) - 1:
            current = getattr(obj, name)
            if is_dataclass(current):
                if not isinstance(value, dict):
                    raise ConfigError(f"{dotted}: expected a mapping")
                for k, v in value.items():
                    set_key(cfg, f"{dotted}.{k}", v)
            else:
                setattr(obj, name, _coerce(value, current, dotted))
        else:
            obj = getattr(obj, name)
            if not is_dataclass(obj):
                raise ConfigError(f"unknown config key {dotted!r}")


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items) -> list[tuple[str, object]]:
    out = []
    for item in items:
        body = item[2:] if item.startswith("--") else item
        if "=" not in body:
            raise ConfigError(f"override {item!r} must look like --key=value")
        key, raw = body.split("=", 1)
        out.append((key, parse_value(raw)))
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults for the task, then the JSON file, then overrides; the run seed fans out to modules."""
    path = path or os.environ.get(CONFIG_ENV) or None
    data: dict = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
    overrides = list(overrides)
    task = dict(overrides).get("task", data.get("task", "imgc"))
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    cfg = desk_defaults(task)
    try:
        for key, value in data.items():
            set_key(cfg, key, value)
        for key, value in overrides:
            set_key(cfg, key, value)
        cfg = cfg.with_seed(cfg.seed)
        cfg.validate()
        # nested dataclass validation (method names, loss weights)
        GanConfig(**asdict(cfg.gan))
        KGEConfig(**asdict(cfg.kge))
        EncoderConfig(**asdict(cfg.encoder))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg
