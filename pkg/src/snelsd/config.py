"""Run configuration: task-dependent defaults, validation, key-value files."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .encoders import CHAIN_KINDS, ENCODER_KINDS, JOINT_KINDS
from .errors import ConfigError

DATA_ROOT_ENV = "SNELSD_DATA_ROOT"

TASK_DEFAULTS = {
    "nli": {
        "optimizer": "adam",
        "lr": 0.0004,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "batch_size": 128,
        "dropout": 0.5,
    },
    "sa": {
        "optimizer": "adadelta",
        "rho": 0.95,
        "eps": 1e-6,
        "lr": 1.0,
        "batch_size": 16,
        "dropout": 0.0,
    },
}

PATH_FIELDS = ("train", "dev", "test", "embeddings")


@dataclass
class RunConfig:
    task: str = "nli"
    encoder: str = "snelsd"
    joint_with: str = "none"
    embed_dim: int = 300
    hidden: int = 300
    compose_hidden: int = 300
    mlp_hidden: int | None = None
    reduce_dim: int | None = None
    late_joint: bool = False
    tree_candidate: str = "sigmoid"
    optimizer: str | None = None
    lr: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    rho: float | None = None
    eps: float | None = None
    batch_size: int | None = None
    dropout: float | None = None
    dropout_embedding: bool = True
    dropout_mlp: bool = True
    epochs: int = 10
    seed: int = 0
    lowercase: bool = False
    min_count: int = 1
    oov_std: float = 0.1
    target_train_acc: float | None = None
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    embeddings: str | None = None

    def resolved(self) -> "RunConfig":
        """Copy with task defaults filled in for every unset field, validated."""
        if self.task not in TASK_DEFAULTS:
            raise ConfigError(f"unknown task {self.task!r}")
        values = asdict(self)
        defaults = TASK_DEFAULTS[self.task]
        optimizer = values["optimizer"] or defaults["optimizer"]
        if optimizer != defaults["optimizer"]:
            defaults = TASK_DEFAULTS["nli" if optimizer == "adam" else "sa"] | {
                k: defaults[k] for k in ("batch_size", "dropout")
            }
        for key, value in defaults.items():
            if values.get(key) is None:
                values[key] = value
        values["optimizer"] = optimizer
        out = RunConfig(**values)
        out.validate()
        return out

    def validate(self) -> None:
        if self.task not in TASK_DEFAULTS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.encoder not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder {self.encoder!r}; choose from {', '.join(ENCODER_KINDS)}")
        if self.joint_with not in JOINT_KINDS:
            raise ConfigError(f"unknown joint_with {self.joint_with!r}")
        if self.joint_with != "none" and self.encoder == "tree":
            raise ConfigError("joint_with is not available for the tree encoder")
        if self.joint_with == "blstm1" and self.encoder not in ("snelsd", "lstm2"):
            raise ConfigError("joint_with=blstm1 is only defined for snelsd and lstm2")
        if self.late_joint:
            if self.task != "nli" or self.joint_with == "none":
                raise ConfigError("late_joint needs task=nli and a joint encoder")
            if not self.reduce_dim:
                raise ConfigError("late_joint needs reduce_dim")
        if self.optimizer not in (None, "adam", "adadelta"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.tree_candidate not in ("sigmoid", "tanh"):
            raise ConfigError("tree_candidate must be sigmoid or tanh")
        if self.dropout is not None and not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        for name in ("embed_dim", "hidden", "compose_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")

    @property
    def is_chain(self) -> bool:
        return self.encoder in CHAIN_KINDS

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def data_path(self, name: str) -> Path | None:
        raw = getattr(self, name)
        if raw is None:
            return None
        path = Path(raw)
        root = os.environ.get(DATA_ROOT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path


def _coerce(name: str, raw: str, annotation: str):
    text = raw.strip()
    if text.lower() in ("none", "null", "") and "None" in annotation:
        return None
    if not text:
        raise ConfigError(f"{name} cannot be empty")
    try:
        if annotation.startswith("bool"):
            if text.lower() in ("true", "yes", "1", "on"):
                return True
            if text.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if annotation.startswith("int"):
            return int(text)
        if annotation.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {annotation}") from None
    return text


FIELD_TYPES = {f.name: str(f.type) for f in fields(RunConfig)}


def parse_value(name: str, raw: str):
    if name not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    return _coerce(name, raw, FIELD_TYPES[name])


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = parse_value(key.replace("-", "_"), value)
    return values
