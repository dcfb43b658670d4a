"""Decentralized two-layer deep Q-learning for shepherding non-cohesive targets.

A group of herder agents steers a group of diffusing repelled targets into a
goal region around the origin.  Control is split into a low-level driving
policy (how a herder chases its selected target) and a high-level selection
policy (which target each herder chases), both trained with deep Q-learning
on a small fully-connected network implemented here from scratch on numpy.
"""

from .config import (
    ConfigError,
    EpisodeConfig,
    ModelParams,
    RewardWeights,
    TrainerConfig,
)

__all__ = [
    "ConfigError",
    "EpisodeConfig",
    "ModelParams",
    "RewardWeights",
    "TrainerConfig",
]

__version__ = "0.1.0"
