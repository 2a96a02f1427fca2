"""Run configuration: one JSON document, with CLI flags layered on top."""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .net import TowerConfig

VARIANTS = ("a", "b", "c", "proposed", "uniform")


@dataclass
class RunConfig:
    data: str = None
    out: str = "runs"
    train_fraction: float = 0.8
    seed: int = 0
    sampling_rate: float = 100.0
    tau: int = 10
    tde_dim: int = 8
    bins: int = 16
    max_shift: int = 50
    gamma_grid: list = None  # None: median heuristic * 2**k, k = -3..3
    gamma_folds: int = 5
    embedding_dim: int = 500
    tower_sizes: list = field(default_factory=lambda: [256, 1024, 512, 64])
    tower_keep_prob: float = 0.5
    batch_norm: bool = True
    kernel_dropout: float = 0.6
    kernel_dropout_reading: str = "keep"  # "keep": p = kernel_dropout; "drop": p = 1 - kernel_dropout
    merge: str = "concat"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 128
    pretrain_epochs: int = 0
    eig_method: str = "lapack"
    variant: str = "proposed"

    def __post_init__(self):
        self.validate()

    @property
    def kernel_keep_prob(self):
        if self.kernel_dropout_reading == "keep":
            return self.kernel_dropout
        return 1.0 - self.kernel_dropout

    @property
    def tower(self):
        return TowerConfig(tuple(self.tower_sizes), self.tower_keep_prob, "relu", self.batch_norm)

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(0.0 < self.train_fraction < 1.0, "train_fraction must lie in (0, 1)")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be an unsigned integer")
        need(self.sampling_rate > 0, "sampling_rate must be positive")
        need(self.tau >= 1 and self.tde_dim >= 1, "tau and tde_dim must be positive")
        need(self.bins >= 1, "bins must be positive")
        need(self.max_shift >= 0, "max_shift must be nonnegative")
        need(self.gamma_grid is None or (len(self.gamma_grid) > 0 and all(g > 0 for g in self.gamma_grid)),
             "gamma_grid must be null or a nonempty list of positive numbers")
        need(self.gamma_folds >= 2, "gamma_folds must be at least 2")
        need(self.embedding_dim >= 1, "embedding_dim must be positive")
        need(len(self.tower_sizes) >= 1 and all(int(s) >= 1 for s in self.tower_sizes),
             "tower_sizes must be a nonempty list of positive integers")
        need(0.0 < self.tower_keep_prob <= 1.0, "tower_keep_prob must lie in (0, 1]")
        need(self.kernel_dropout_reading in ("keep", "drop"), "kernel_dropout_reading must be 'keep' or 'drop'")
        need(0.0 < self.kernel_keep_prob <= 1.0, "kernel keep probability must lie in (0, 1]")
        need(self.merge in ("concat", "sum", "mean"), "merge must be concat, sum or mean")
        need(self.lr > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0,
             "invalid optimizer parameters")
        need(self.epochs >= 0 and self.batch_size >= 1 and self.pretrain_epochs >= 0,
             "epochs, pretrain_epochs must be >= 0 and batch_size >= 1")
        need(self.eig_method in ("lapack", "jacobi"), "eig_method must be lapack or jacobi")
        need(self.variant in VARIANTS or (self.variant.startswith("single:") and len(self.variant) > 7),
             f"variant must be one of {VARIANTS} or single:<kernel>")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return RunConfig.from_dict({**self.to_dict(), **{k: v for k, v in changes.items() if v is not None}})

    def feature_fingerprint(self):
        """Settings that determine features, kernels and the split."""
        keys = ("train_fraction", "seed", "sampling_rate", "tau", "tde_dim", "bins",
                "max_shift", "gamma_grid", "gamma_folds", "eig_method")
        return {k: getattr(self, k) for k in keys}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(raw)
