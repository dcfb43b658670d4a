"""Episode lifecycle: initial conditions, observations, rewards, termination.

State advances synchronously: herders integrate their commands first, then
targets react to the herder positions from the start of the step.  An episode
terminates when every target has stayed inside the goal region for
``containment_window`` consecutive post-update states, or when the horizon is
reached.  Rewards are always evaluated on the post-update state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import EpisodeConfig, ModelParams, RewardWeights
from .sim import WorldState, step_herders, step_targets


@dataclass
class StepOutcome:
    """Result of one environment step."""

    next_state: WorldState
    reward: float
    terminated: bool
    settled_counter: int


def contained_mask(targets: np.ndarray, params: ModelParams) -> np.ndarray:
    """Boolean mask of targets inside the closed goal disc."""
    return np.sum(targets * targets, axis=1) <= params.goal_radius**2


def low_level_reward(
    world: WorldState, params: ModelParams, weights: RewardWeights
) -> float:
    """Driving reward for the single-herder single-target sub-task.

    Penalizes the target's distance from the origin and from the herder,
    pays a bonus while the target sits in the goal region and a larger
    penalty while the herder itself intrudes into it.
    """
    tx, ty = world.targets[0]
    hx, hy = world.herders[0]
    target_radius = math.hypot(tx, ty)
    herder_radius = math.hypot(hx, hy)
    separation = math.hypot(tx - hx, ty - hy)
    reward = -weights.target_origin_cost * target_radius - weights.separation_cost * separation
    if target_radius <= params.goal_radius:
        reward += weights.goal_entry_bonus
    if herder_radius <= params.goal_radius:
        reward -= weights.goal_intrusion_penalty
    return reward


def selection_reward(
    world: WorldState, params: ModelParams, weights: RewardWeights
) -> float:
    """Global containment reward: minus the summed overshoot past the goal."""
    radii = np.sqrt(np.sum(world.targets * world.targets, axis=1))
    overshoot = np.maximum(radii - params.goal_radius, 0.0)
    return float(-weights.containment_cost * np.sum(overshoot))


def _uniform_disc(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    draws = rng.random((count, 2))
    r = radius * np.sqrt(draws[:, 0])
    theta = 2.0 * np.pi * draws[:, 1]
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _uniform_annulus(
    rng: np.random.Generator, count: int, r_min: float, r_max: float
) -> np.ndarray:
    draws = rng.random((count, 2))
    r = np.sqrt(r_min**2 + draws[:, 0] * (r_max**2 - r_min**2))
    theta = 2.0 * np.pi * draws[:, 1]
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _quadrant_quarter_disc(
    rng: np.random.Generator, count: int, radius: float, quadrant: int
) -> np.ndarray:
    draws = rng.random((count, 2))
    r = radius * np.sqrt(draws[:, 0])
    theta = (np.pi / 2.0) * draws[:, 1] + (np.pi / 2.0) * quadrant
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def reset(
    rng: np.random.Generator,
    config: EpisodeConfig,
    params: ModelParams,
    episode_index: int = 0,
) -> WorldState:
    """Fresh world state with zero target velocities.

    Herder draws always precede target draws so a given rng state yields the
    same world.  In quadrant mode the herder is uniform over the whole arena
    and the targets start in the quarter-disc of ``ic_radius`` lying in
    quadrant ``episode_index mod 4`` (first quadrant for index 0, then
    counterclockwise).
    """
    n, m = config.n_herders, config.n_targets
    if config.ic_mode == "quadrant":
        herders = rng.uniform(-params.half_extent, params.half_extent, (n, 2))
        targets = _quadrant_quarter_disc(rng, m, config.ic_radius, episode_index % 4)
    elif config.ic_mode == "disc":
        herders = _uniform_disc(rng, n, config.ic_radius)
        targets = _uniform_disc(rng, m, config.ic_radius)
    elif config.ic_mode == "annulus":
        if config.ic_r_min >= config.ic_r_max:
            raise ValueError(
                f"annulus needs r_min < r_max, got {config.ic_r_min} / {config.ic_r_max}"
            )
        herders = _uniform_annulus(rng, n, config.ic_r_min, config.ic_r_max)
        targets = _uniform_annulus(rng, m, config.ic_r_min, config.ic_r_max)
    else:
        raise ValueError(f"unknown ic_mode {config.ic_mode!r}")
    return WorldState(
        herders=herders, targets=targets, target_vels=np.zeros((m, 2)), step=0
    )


def env_step(
    world: WorldState,
    herder_actions: np.ndarray,
    rng: np.random.Generator,
    config: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    settled_counter: int = 0,
) -> StepOutcome:
    """Advance the world one step and score it.

    ``herder_actions`` is an (n, 2) array of velocity commands.  The reward is
    the driving reward in the one-herder one-target setting and the global
    containment reward otherwise.  ``settled_counter`` is the caller-threaded
    count of consecutive fully-contained post-update states.
    """
    actions = np.asarray(herder_actions, dtype=float)
    if actions.shape != world.herders.shape:
        raise ValueError(
            f"need one action per herder: got {actions.shape}, "
            f"expected {world.herders.shape}"
        )
    new_herders = step_herders(world.herders, actions, params)
    new_targets, new_vels = step_targets(
        world.targets, world.target_vels, world.herders, params, rng
    )
    next_state = WorldState(
        herders=new_herders,
        targets=new_targets,
        target_vels=new_vels,
        step=world.step + 1,
    )
    if config.n_herders == 1 and config.n_targets == 1:
        reward = low_level_reward(next_state, params, weights)
    else:
        reward = selection_reward(next_state, params, weights)
    if bool(np.all(contained_mask(new_targets, params))):
        counter = settled_counter + 1
    else:
        counter = 0
    terminated = counter >= config.containment_window or next_state.step >= config.horizon
    return StepOutcome(
        next_state=next_state, reward=reward, terminated=terminated, settled_counter=counter
    )


def build_low_obs(
    herder: np.ndarray,
    target: np.ndarray,
    target_vel: np.ndarray,
    params: ModelParams,
) -> np.ndarray:
    """Driving observation: herder and target positions over the arena scale,
    target velocity over its speed bound; six entries, not clamped."""
    obs = np.empty(6)
    obs[0:2] = herder
    obs[2:4] = target
    obs[0:4] /= params.half_extent
    obs[4:6] = target_vel
    obs[4:6] /= params.target_speed_max
    return obs


@dataclass
class SelectionObservation:
    """Nearest-neighbor encoded input for the target-selection net.

    ``vector`` holds, in order, the observing herder's own position, the
    ``nhat - 1`` nearest other herders and the ``mhat`` nearest eligible
    (uncontained) targets, nearest-first, all divided by the arena scale.
    Missing neighbors are padded with the observer's own position.
    ``slot_targets[j]`` maps target slot j to a global target index, -1 for
    padded slots.
    """

    vector: np.ndarray
    slot_targets: np.ndarray


def _nearest_indices(
    anchor: np.ndarray, points: np.ndarray, candidate_ids: np.ndarray, count: int
) -> np.ndarray:
    """Up to ``count`` candidate ids sorted by distance to anchor, ties by id."""
    if candidate_ids.size == 0:
        return candidate_ids[:0]
    diffs = points[candidate_ids] - anchor
    dist2 = np.sum(diffs * diffs, axis=1)
    order = np.lexsort((candidate_ids, dist2))
    return candidate_ids[order[:count]]


def build_selection_obs(
    self_index: int,
    world: WorldState,
    nhat: int,
    mhat: int,
    params: ModelParams,
) -> SelectionObservation:
    if nhat < 1 or mhat < 2:
        raise ValueError(f"need nhat >= 1 and mhat >= 2, got {nhat} / {mhat}")
    self_pos = world.herders[self_index]
    scale = params.half_extent

    other_ids = np.array(
        [i for i in range(world.herders.shape[0]) if i != self_index], dtype=np.int64
    )
    herd_ids = _nearest_indices(self_pos, world.herders, other_ids, nhat - 1)

    eligible = np.flatnonzero(~contained_mask(world.targets, params)).astype(np.int64)
    target_ids = _nearest_indices(self_pos, world.targets, eligible, mhat)

    vector = np.empty(2 * (nhat + mhat))
    vector[0:2] = self_pos / scale
    cursor = 2
    for k in range(nhat - 1):
        pos = world.herders[herd_ids[k]] if k < herd_ids.size else self_pos
        vector[cursor : cursor + 2] = pos / scale
        cursor += 2
    slot_targets = np.full(mhat, -1, dtype=np.int64)
    for k in range(mhat):
        if k < target_ids.size:
            slot_targets[k] = target_ids[k]
            pos = world.targets[target_ids[k]]
        else:
            pos = self_pos
        vector[cursor : cursor + 2] = pos / scale
        cursor += 2
    return SelectionObservation(vector=vector, slot_targets=slot_targets)
