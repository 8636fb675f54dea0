"""Fine-tuning algorithms: losses, replay, presets and the budgeted loop."""

from .config import ALGORITHMS, PRESETS, AlgoConfig, ConfigError, preset
from .losses import (
    DegenerateCertainSequence,
    MissingPriorLogProb,
    a2c_loss,
    ahc_filter,
    kl_to_prior,
    likelihood_penalty,
    ppo_loss,
    ppo_surrogate,
    reinforce_loss,
    reinvent_loss,
)
from .replay import ReplayBuffer, molecule_key
from .trainer import RunResult, train_loop
