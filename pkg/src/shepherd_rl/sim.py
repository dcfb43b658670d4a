"""Stochastic herder/target dynamics.

Targets are second-order Langevin particles: viscous damping, additive white
noise and a short-range repulsion away from every herder.  Herders are single
integrators driven by a velocity command.  Both integrate with the
Euler-Maruyama scheme at a fixed step, and positions are clamped to the arena
box when the world is bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelParams

# Below this herder-target distance the repulsion direction is undefined and
# the contribution is skipped.
SINGULARITY_EPS = 1e-9


@dataclass
class WorldState:
    """Positions and target velocities at one instant, plus the step count."""

    herders: np.ndarray        # (n, 2) float64
    targets: np.ndarray        # (m, 2) float64
    target_vels: np.ndarray    # (m, 2) float64
    step: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            herders=self.herders.copy(),
            targets=self.targets.copy(),
            target_vels=self.target_vels.copy(),
            step=self.step,
        )


def repulsion(target: np.ndarray, herders: np.ndarray, params: ModelParams) -> np.ndarray:
    """Unit-gain repulsion on one target from all herders.

    Each herder within range pushes the target away along the line joining
    them, with magnitude 0.5 * (1 - tanh(stiffness * (d - range) / range)):
    close to 1 inside the repulsion range, decaying to 0 outside.  Herders
    closer than SINGULARITY_EPS contribute nothing.
    """
    diff = target[None, :] - herders                     # (n, 2)
    dist = np.sqrt(np.sum(diff * diff, axis=1))          # (n,)
    safe = dist >= SINGULARITY_EPS
    if not np.any(safe):
        return np.zeros(2)
    diff = diff[safe]
    dist = dist[safe]
    falloff = 0.5 * (
        1.0
        - np.tanh(
            params.repulsion_stiffness
            * (dist - params.repulsion_range)
            / params.repulsion_range
        )
    )
    return np.sum((falloff / dist)[:, None] * diff, axis=0)


def repulsion_all(targets: np.ndarray, herders: np.ndarray, params: ModelParams) -> np.ndarray:
    """Vectorized repulsion for every target at once, shape (m, 2)."""
    diff = targets[:, None, :] - herders[None, :, :]     # (m, n, 2)
    dist = np.sqrt(np.sum(diff * diff, axis=2))          # (m, n)
    falloff = 0.5 * (
        1.0
        - np.tanh(
            params.repulsion_stiffness
            * (dist - params.repulsion_range)
            / params.repulsion_range
        )
    )
    scale = np.where(dist >= SINGULARITY_EPS, falloff / np.maximum(dist, SINGULARITY_EPS), 0.0)
    return np.einsum("mn,mnk->mk", scale, diff)


def step_targets(
    positions: np.ndarray,
    velocities: np.ndarray,
    herders: np.ndarray,
    params: ModelParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One Euler-Maruyama step of the target dynamics.

    The position update uses the velocity from the start of the step; the
    velocity update adds damping, amplified repulsion and scaled white noise,
    then clamps each component to the target speed bound.  Draws exactly one
    (m, 2) standard-normal block from ``rng``.
    """
    noise = rng.standard_normal(positions.shape)
    force = -params.damping * velocities + params.repulsion_strength * repulsion_all(
        positions, herders, params
    )
    new_positions = positions + velocities * params.dt
    new_velocities = velocities + force * params.dt + params.noise_sigma * np.sqrt(params.dt) * noise
    np.clip(
        new_velocities, -params.target_speed_max, params.target_speed_max, out=new_velocities
    )
    if params.bounded:
        np.clip(new_positions, -params.half_extent, params.half_extent, out=new_positions)
    return new_positions, new_velocities


def step_herders(
    positions: np.ndarray, commands: np.ndarray, params: ModelParams
) -> np.ndarray:
    """One integrator step of the herders under clamped velocity commands."""
    clamped = np.clip(commands, -params.herder_speed_max, params.herder_speed_max)
    new_positions = positions + clamped * params.dt
    if params.bounded:
        np.clip(new_positions, -params.half_extent, params.half_extent, out=new_positions)
    return new_positions
