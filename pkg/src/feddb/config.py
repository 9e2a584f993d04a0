"""Experiment configuration: defaults, file parsing, and validation.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Command
line flags override file values, which override defaults.
"""

import dataclasses
from dataclasses import dataclass
from typing import Tuple

from .errors import ConfigError
from .federation import ExperimentSetup, LocalTrainConfig, METHODS

DEFAULT_METHODS = ("fedavg_labeled_only", "fixmatch", "feddb")


@dataclass
class ExperimentConfig:
    # method arms and repetition
    methods: Tuple[str, ...] = DEFAULT_METHODS
    seed: int = 0
    repeats: int = 1
    out_dir: str = "results"
    dataset: str = "synthetic"
    # federation
    clients: int = 10
    activation_rate: float = 1.0
    rounds: int = 200
    local_epochs: int = 5
    e_aggr: int = 100
    lr: float = 0.03
    lr_aggr: float = 1.0
    momentum: float = 0.9
    # semi-supervision
    tau: float = 0.95
    lambda_u: float = 1.0
    gamma: float = 0.9
    # partitioning
    delta: float = 0.3
    iid: bool = False
    shared_partition_draw: bool = False
    include_labeled_in_unlabeled: bool = True
    # synthetic task
    classes: int = 5
    dim: int = 16
    n_labeled: int = 100
    n_unlabeled: int = 4900
    class_separation: float = 2.2
    noise_scale: float = 1.0
    arrangement: str = "simplex"
    test_per_class: int = 200
    # augmentation strengths, relative to noise_scale
    weak_sigma_scale: float = 0.1
    strong_sigma_scale: float = 0.5
    mask_prob: float = 0.2
    # model
    hidden_dim: int = 64

    def validate(self) -> "ExperimentConfig":
        if not self.methods:
            raise ConfigError("at least one method arm is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        checks = [
            (self.seed >= 0, "seed must be >= 0"),
            (self.repeats >= 1, "repeats must be >= 1"),
            (self.clients >= 1, "clients must be >= 1"),
            (0.0 < self.activation_rate <= 1.0, "activation-rate must be in (0, 1]"),
            (int(round(self.clients * self.activation_rate)) >= 1,
             "activation-rate selects no clients"),
            (self.rounds >= 1, "rounds must be >= 1"),
            (self.local_epochs >= 1, "local-epochs must be >= 1"),
            (self.e_aggr >= 1, "e-aggr must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (self.lr_aggr > 0, "lr-aggr must be positive"),
            (0.0 <= self.momentum < 1.0, "momentum must be in [0, 1)"),
            (0.0 < self.tau <= 1.0, "tau must be in (0, 1]"),
            (self.lambda_u >= 0.0, "lambda must be >= 0"),
            (0.0 <= self.gamma < 1.0, "gamma must be in [0, 1)"),
            (self.iid or self.delta > 0.0, "delta must be positive"),
            (self.classes >= 2, "classes must be >= 2"),
            (self.dim >= 2, "dim must be >= 2"),
            (self.n_labeled >= self.clients,
             "need at least one labeled sample per client"),
            (self.n_labeled % self.classes == 0,
             "n_labeled must be divisible by the class count"),
            ((self.n_labeled + self.n_unlabeled) % self.classes == 0,
             "n_labeled + n_unlabeled must be divisible by the class count"),
            (self.n_unlabeled >= 1, "n_unlabeled must be >= 1"),
            (self.class_separation > 0, "class_separation must be positive"),
            (self.arrangement in ("simplex", "circle"), "arrangement must be simplex or circle"),
            (self.arrangement != "simplex" or self.classes <= self.dim,
             "simplex arrangement needs dim >= classes"),
            (self.noise_scale > 0, "noise_scale must be positive"),
            (self.test_per_class >= 1, "test_per_class must be >= 1"),
            (self.weak_sigma_scale >= 0, "weak_sigma_scale must be >= 0"),
            (self.strong_sigma_scale >= 0, "strong_sigma_scale must be >= 0"),
            (0.0 <= self.mask_prob <= 1.0, "mask_prob must be in [0, 1]"),
            (self.hidden_dim >= 1, "hidden_dim must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    @property
    def sigma_weak(self) -> float:
        return self.weak_sigma_scale * self.noise_scale

    @property
    def sigma_strong(self) -> float:
        return self.strong_sigma_scale * self.noise_scale

    def setup(self) -> ExperimentSetup:
        return ExperimentSetup(
            n_clients=self.clients,
            activation_rate=self.activation_rate,
            rounds=self.rounds,
            local=LocalTrainConfig(
                epochs=self.local_epochs,
                lr=self.lr,
                momentum=self.momentum,
                tau=self.tau,
                lambda_u=self.lambda_u,
                sigma_weak=self.sigma_weak,
                sigma_strong=self.sigma_strong,
                mask_prob=self.mask_prob,
            ),
            e_aggr=self.e_aggr,
            eta_aggr=self.lr_aggr,
            gamma=self.gamma,
            n_classes=self.classes,
            dim=self.dim,
            n_labeled=self.n_labeled,
            n_unlabeled=self.n_unlabeled,
            class_separation=self.class_separation,
            noise_scale=self.noise_scale,
            arrangement=self.arrangement,
            test_per_class=self.test_per_class,
            delta=self.delta,
            iid=self.iid,
            hidden_dims=(self.hidden_dim,),
            shared_draw=self.shared_partition_draw,
            include_labeled_in_unlabeled=self.include_labeled_in_unlabeled,
        )

    def delta_tag(self) -> str:
        return "iid" if self.iid else f"{self.delta:g}"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_BOOL_FIELDS = {"iid", "shared_partition_draw", "include_labeled_in_unlabeled"}


def _parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key == "methods":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if key in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} expects true/false, got {raw!r}")
    if key in ("out_dir", "dataset", "arrangement"):
        return raw
    try:
        if key in (
            "seed", "repeats", "clients", "rounds", "local_epochs", "e_aggr",
            "classes", "dim", "n_labeled", "n_unlabeled", "test_per_class", "hidden_dim",
        ):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        values[key] = _parse_value(key, raw)
    return values


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Defaults, then file values, then explicit overrides; validated."""
    values = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        values[key] = _parse_value(key, val) if isinstance(val, str) else val
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def serialize(cfg: ExperimentConfig) -> str:
    """key = value text that load_config parses back to an equal config."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "methods":
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
