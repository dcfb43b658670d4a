"""Physical, reward and learning constants for the shepherding system.

All defaults reproduce the nominal setup: a square arena of half-extent 100
with a goal disc of radius 5 at the origin, slow noisy targets and faster
herders.  Training presets for the three scenarios (driving, single-herder
target selection, multi-herder target selection) are provided at the bottom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace


class ConfigError(ValueError):
    """Raised when a configuration value is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class ModelParams:
    """Constants of the herder/target dynamical model."""

    dt: float = 0.05                    # integration step [s]
    half_extent: float = 100.0          # arena is [-half_extent, half_extent]^2
    target_speed_max: float = 1.0       # componentwise target velocity bound
    herder_speed_max: float = 5.0       # componentwise herder command bound
    goal_radius: float = 5.0            # goal region is the disc of this radius
    noise_sigma: float = 1.0            # diffusion coefficient of target noise
    damping: float = 1.0                # viscous damping on target velocity [1/s]
    repulsion_strength: float = 20.0    # gain on the herder->target repulsion
    repulsion_stiffness: float = 5.0    # sharpness of the repulsion falloff
    repulsion_range: float = 2.5        # distance where repulsion decays [units]
    bounded: bool = True                # clamp positions to the arena box

    def validate(self) -> None:
        for f in fields(self):
            if f.name == "bounded":
                continue
            value = getattr(self, f.name)
            if not (value > 0):
                raise ConfigError(f"model.{f.name} must be positive, got {value!r}")
        if not self.herder_speed_max > self.target_speed_max:
            raise ConfigError(
                "herders must be faster than targets: "
                f"herder_speed_max={self.herder_speed_max} <= "
                f"target_speed_max={self.target_speed_max}"
            )
        if self.bounded and not self.goal_radius < self.half_extent:
            raise ConfigError(
                f"goal_radius={self.goal_radius} must be smaller than "
                f"half_extent={self.half_extent}"
            )


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the per-step rewards for both control layers."""

    target_origin_cost: float = 0.5     # scales the target's distance from the origin
    separation_cost: float = 1.0        # scales the herder-target distance
    goal_entry_bonus: float = 20.0      # awarded while the target sits in the goal
    goal_intrusion_penalty: float = 50.0  # charged while the herder sits in the goal
    containment_cost: float = 1.0       # scales summed target overshoot past the goal

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (value > 0):
                raise ConfigError(f"weights.{f.name} must be positive, got {value!r}")


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: agent counts, horizon and initial-condition sampling."""

    n_herders: int = 1
    n_targets: int = 1
    horizon: int = 2000                 # hard step limit per episode
    containment_window: int = 200       # consecutive contained steps ending an episode
    ic_mode: str = "quadrant"           # quadrant | disc | annulus
    ic_radius: float = 50.0             # disc mode (also bounds the cycled quadrants)
    ic_r_min: float = 15.0              # annulus mode
    ic_r_max: float = 30.0

    def validate(self) -> None:
        if self.n_herders < 1 or self.n_targets < 1:
            raise ConfigError("episode needs at least one herder and one target")
        if not (self.horizon > self.containment_window > 0):
            raise ConfigError(
                f"need horizon > containment_window > 0, got "
                f"{self.horizon} / {self.containment_window}"
            )
        if self.ic_mode not in ("quadrant", "disc", "annulus"):
            raise ConfigError(f"unknown ic_mode {self.ic_mode!r}")
        if self.ic_mode == "disc" and not self.ic_radius > 0:
            raise ConfigError(f"ic_radius must be positive, got {self.ic_radius!r}")
        if self.ic_mode == "annulus" and not (0 <= self.ic_r_min < self.ic_r_max):
            raise ConfigError(
                f"annulus needs 0 <= r_min < r_max, got "
                f"{self.ic_r_min} / {self.ic_r_max}"
            )


@dataclass(frozen=True)
class TrainerConfig:
    """Deep Q-learning hyperparameters."""

    learning_rate: float = 1e-4
    batch_size: int = 64
    discount: float = 0.99
    epsilon_start: float = 0.1
    epsilon_floor: float = 0.1
    epsilon_decay: float = 0.0          # linear decrease per learn step
    buffer_capacity: int = 10_000
    buffer_warmup: int = 1_000          # no learning below this buffer size
    target_sync_every: int = 1          # learn steps between target-network copies
    selection_window: int = 100         # steps a target assignment is held
    max_episodes: int = 2000
    grad_clip: float = 0.0              # elementwise clip, 0 disables
    probe_every: int = 0                # episodes between greedy deployment
                                        # probes; 0 keeps streak snapshots
    probe_episodes: int = 20            # episodes per probe

    def validate(self) -> None:
        if not (0 < self.discount < 1):
            raise ConfigError(f"discount must lie in (0,1), got {self.discount}")
        for name in ("epsilon_start", "epsilon_floor"):
            value = getattr(self, name)
            if not (0 <= value <= 1):
                raise ConfigError(f"trainer.{name} must lie in [0,1], got {value}")
        if self.epsilon_decay < 0:
            raise ConfigError("epsilon_decay must be non-negative")
        if not (self.batch_size <= self.buffer_warmup <= self.buffer_capacity):
            raise ConfigError(
                "need batch_size <= buffer_warmup <= buffer_capacity, got "
                f"{self.batch_size} / {self.buffer_warmup} / {self.buffer_capacity}"
            )
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("target_sync_every", "selection_window", "max_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"trainer.{name} must be at least 1")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be non-negative (0 disables)")
        if self.probe_every < 0:
            raise ConfigError("probe_every must be non-negative (0 disables)")
        if self.probe_episodes < 1:
            raise ConfigError("probe_episodes must be at least 1")


# Hidden-layer widths are part of the method, not tunables.
DRIVING_HIDDEN = (128, 64)
SELECTION_HIDDEN = (512, 256)
DRIVING_ACTIONS = 25                    # 5x5 grid of command components

# Scenario presets.  Driving uses a fixed exploration rate and a target copy
# after every learn step; selection decays exploration from 1.0 and syncs the
# target network every 10 learn steps.
DRIVING_TRAINER = TrainerConfig()
SELECTION_TRAINER = TrainerConfig(
    batch_size=32,
    epsilon_start=1.0,
    epsilon_floor=0.05,
    epsilon_decay=1e-5,
    buffer_capacity=50_000,
    target_sync_every=10,
    selection_window=100,
    max_episodes=20_000,
)
MULTI_TRAINER = replace(SELECTION_TRAINER, max_episodes=10_000)
# frozen-policy campaigns reselect targets every step
VALIDATE_TRAINER = replace(SELECTION_TRAINER, selection_window=1)

DRIVING_EPISODES = EpisodeConfig()
SELECTION_EPISODES = EpisodeConfig(
    n_herders=1, n_targets=5, horizon=10_000, containment_window=200,
    ic_mode="disc", ic_radius=50.0,
)
MULTI_EPISODES = EpisodeConfig(
    n_herders=2, n_targets=5, horizon=10_000, containment_window=200,
    ic_mode="disc", ic_radius=50.0,
)
SCALE_EPISODES = EpisodeConfig(
    n_herders=10, n_targets=100, horizon=5_000, containment_window=200,
    ic_mode="annulus", ic_r_min=15.0, ic_r_max=30.0,
)
