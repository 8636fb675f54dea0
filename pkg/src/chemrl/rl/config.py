"""Algorithm settings and the shipped presets.

Preset values are desk-scale choices of this package, not tuned reference
numbers: learning rates are raised so that a few thousand oracle calls show
measurable learning with the small toy prior.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

ALGORITHMS = ("REINFORCE", "REINVENT", "AHC", "A2C", "PPO", "PPOD")


class ConfigError(ValueError):
    pass


@dataclass
class AlgoConfig:
    algorithm: str = "REINVENT"
    sigma: float = 60.0  # reward-shaping coefficient
    topk_fraction: float = 1.0  # AHC keeps the best ceil(topk_fraction * B)
    penalty_coef: float = 0.0  # likelihood penalty, off when 0
    kl_coef: float = 0.0
    clip_eps: float = 0.2
    ppo_epochs: int = 4
    ppo_minibatches: int = 4
    replay: bool = False
    replay_capacity: int = 100
    replay_sample: int = 10
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    baseline: bool = False  # moving-average baseline for REINFORCE
    baseline_decay: float = 0.9
    lr: float = 1e-3
    batch_size: int = 64
    budget: int = 10000
    grad_clip: float = 5.0
    max_len: int = 100

    def validate(self) -> "AlgoConfig":
        checks = [
            (self.algorithm in ALGORITHMS, "algorithm", f"must be one of {', '.join(ALGORITHMS)}"),
            (self.sigma >= 0, "sigma", "must be >= 0"),
            (0 < self.topk_fraction <= 1, "topk_fraction", "must lie in (0, 1]"),
            (self.penalty_coef >= 0, "penalty_coef", "must be >= 0"),
            (self.kl_coef >= 0, "kl_coef", "must be >= 0"),
            (0 < self.clip_eps < 1, "clip_eps", "must lie in (0, 1)"),
            (self.ppo_epochs >= 1, "ppo_epochs", "must be >= 1"),
            (self.ppo_minibatches >= 1, "ppo_minibatches", "must be >= 1"),
            (self.replay_capacity >= 1, "replay_capacity", "must be >= 1"),
            (self.replay_sample >= 0, "replay_sample", "must be >= 0"),
            (self.entropy_coef >= 0, "entropy_coef", "must be >= 0"),
            (self.value_coef >= 0, "value_coef", "must be >= 0"),
            (0 <= self.baseline_decay < 1, "baseline_decay", "must lie in [0, 1)"),
            (self.lr > 0, "lr", "must be > 0"),
            (self.batch_size >= 1, "batch_size", "must be >= 1"),
            (self.budget >= self.batch_size, "budget", "must be >= batch_size"),
            (self.grad_clip >= 0, "grad_clip", "must be >= 0"),
            (self.max_len >= 1, "max_len", "must be >= 1"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"algo.{key} {msg} (got {getattr(self, key)!r})")
        return self

    @property
    def uses_critic(self) -> bool:
        return self.algorithm in ("A2C", "PPO", "PPOD")

    @property
    def uses_prior(self) -> bool:
        return self.algorithm in ("REINVENT", "AHC") or self.kl_coef > 0

    def replace(self, **changes) -> "AlgoConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS: dict[str, AlgoConfig] = {
    "REINFORCE": AlgoConfig("REINFORCE", sigma=0.0, replay=True),
    "REINVENT": AlgoConfig("REINVENT", sigma=60.0, penalty_coef=5000.0, replay=True),
    "REINVENT-MolOpt": AlgoConfig("REINVENT", sigma=500.0, penalty_coef=5000.0, replay=True, replay_sample=24),
    "AHC": AlgoConfig("AHC", sigma=60.0, topk_fraction=0.5, replay=True),
    "A2C": AlgoConfig("A2C", kl_coef=0.01, entropy_coef=0.001),
    "PPO": AlgoConfig("PPO", kl_coef=0.01, entropy_coef=0.001),
    "PPOD": AlgoConfig("PPOD", kl_coef=0.01, entropy_coef=0.001, replay=True, replay_sample=10),
}


def preset(name: str, **overrides) -> AlgoConfig:
    """A validated copy of a named preset with field overrides."""
    key = next((k for k in PRESETS if k.lower() == name.lower()), None)
    if key is None:
        raise ConfigError(f"unknown algorithm preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[key].replace(**overrides).validate()
