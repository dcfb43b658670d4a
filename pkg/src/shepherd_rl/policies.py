"""Frozen-policy inference: driving commands, target selection, composition.

The driving policy maps the six-entry low-level observation to one of 25
discrete velocity commands (a 5x5 grid per axis).  Target selectors map a
herder's view of the world to the global index of the target it should chase:
a learned cooperative selector, the same network applied without peer
awareness, and a plane-partitioning heuristic.  The two-layer controller
composes a selector with the driving policy on a fixed decision window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelParams
from .env import SelectionObservation, build_low_obs, build_selection_obs, contained_mask
from .network import QNetwork, forward
from .sim import WorldState

ACTION_COUNT = 25
_TWO_PI = 2.0 * np.pi


def action_bins(params: ModelParams) -> np.ndarray:
    """The five per-axis command values: symmetric, endpoints at the bound."""
    v = params.herder_speed_max
    return np.array([-v, -v / 2.0, 0.0, v / 2.0, v])


def decode_action(index: int, params: ModelParams) -> np.ndarray:
    """Command for one discrete action: x bin is index // 5, y bin index % 5."""
    if not 0 <= index < ACTION_COUNT:
        raise ValueError(f"action index {index} out of range 0..{ACTION_COUNT - 1}")
    bins = action_bins(params)
    return np.array([bins[index // 5], bins[index % 5]])


@dataclass
class DrivingPolicy:
    """Frozen low-level network (6 -> 128 -> 64 -> 25) plus model constants."""

    network: QNetwork
    params: ModelParams

    def __post_init__(self) -> None:
        if self.network.layer_dims[-1] != ACTION_COUNT:
            raise ValueError(
                f"driving network must have {ACTION_COUNT} outputs, "
                f"got {self.network.layer_dims[-1]}"
            )


def drive(
    policy: DrivingPolicy,
    herder: np.ndarray,
    target: np.ndarray,
    target_vel: np.ndarray,
) -> np.ndarray:
    """Greedy velocity command toward the given target (ties: lowest index)."""
    obs = build_low_obs(herder, target, target_vel, policy.params)
    q = forward(policy.network, obs)
    return decode_action(int(np.argmax(q)), policy.params)


def drive_batch(
    policy: DrivingPolicy,
    herders: np.ndarray,
    targets: np.ndarray,
    target_vels: np.ndarray,
) -> np.ndarray:
    """Greedy commands for several herder/target pairs in one forward pass."""
    k = herders.shape[0]
    if k == 0:
        return np.zeros((0, 2))
    obs = np.empty((k, 6))
    obs[:, 0:2] = herders
    obs[:, 2:4] = targets
    obs[:, 0:4] /= policy.params.half_extent
    obs[:, 4:6] = target_vels / policy.params.target_speed_max
    indices = np.argmax(forward(policy.network, obs), axis=1)
    bins = action_bins(policy.params)
    return np.column_stack((bins[indices // 5], bins[indices % 5]))


@dataclass
class SelectionPolicy:
    """Frozen high-level network (2(nhat+mhat) -> 512 -> 256 -> mhat)."""

    network: QNetwork
    nhat: int
    mhat: int

    def __post_init__(self) -> None:
        dims = self.network.layer_dims
        if dims[0] != 2 * (self.nhat + self.mhat) or dims[-1] != self.mhat:
            raise ValueError(
                f"selection network dims {dims} inconsistent with "
                f"nhat={self.nhat}, mhat={self.mhat}"
            )


def select(policy: SelectionPolicy, obs: SelectionObservation) -> int | None:
    """Greedy slot choice restricted to valid slots; None when all padded."""
    valid_slots = np.flatnonzero(obs.slot_targets >= 0)
    if valid_slots.size == 0:
        return None
    q = forward(policy.network, obs.vector)
    best = valid_slots[int(np.argmax(q[valid_slots]))]
    return int(obs.slot_targets[best])


def p2p_select(self_index: int, world: WorldState, params: ModelParams) -> int | None:
    """Plane-partitioning heuristic selection.

    The plane is split into one angular sector per herder, bounded by the
    angular bisectors between angularly consecutive herders; equivalently,
    each target belongs to the herder nearest in polar angle (ties to the
    lower herder index, whole plane for a single herder).  Each herder picks
    the uncontained target of largest radius inside its own sector, or None
    when the sector holds none.
    """
    herders = world.herders
    uncontained = np.flatnonzero(~contained_mask(world.targets, params))
    if uncontained.size == 0:
        return None
    if herders.shape[0] == 1:
        candidates = uncontained
    else:
        h_angles = np.arctan2(herders[:, 1], herders[:, 0])
        t_angles = np.arctan2(
            world.targets[uncontained, 1], world.targets[uncontained, 0]
        )
        # circular distance in (m, n): |wrap(t - h)| with wrap into [-pi, pi)
        sep = np.abs(
            (t_angles[:, None] - h_angles[None, :] + np.pi) % _TWO_PI - np.pi
        )
        owners = np.argmin(sep, axis=1)
        candidates = uncontained[owners == self_index]
        if candidates.size == 0:
            return None
    radii = np.linalg.norm(world.targets[candidates], axis=1)
    return int(candidates[int(np.argmax(radii))])


@dataclass
class LearnedSelector:
    """Cooperative selection with the full nhat-aware observation."""

    policy: SelectionPolicy
    params: ModelParams

    def choose(self, self_index: int, world: WorldState) -> int | None:
        obs = build_selection_obs(
            self_index, world, self.policy.nhat, self.policy.mhat, self.params
        )
        return select(self.policy, obs)


@dataclass
class IndependentSelector:
    """Single-herder policy applied per herder, blind to its peers."""

    policy: SelectionPolicy
    params: ModelParams

    def __post_init__(self) -> None:
        if self.policy.nhat != 1:
            raise ValueError("independent selection requires a policy trained with nhat=1")

    def choose(self, self_index: int, world: WorldState) -> int | None:
        obs = build_selection_obs(self_index, world, 1, self.policy.mhat, self.params)
        return select(self.policy, obs)


@dataclass
class P2PSelector:
    """Sector-partition heuristic baseline."""

    params: ModelParams

    def choose(self, self_index: int, world: WorldState) -> int | None:
        return p2p_select(self_index, world, self.params)


@dataclass
class TwoLayerController:
    """Per-episode composition of a target selector and the driving policy.

    Assignments refresh on the decision grid (every ``window`` steps) and
    immediately whenever the held assignment is gone or contained.  Herders
    with no assignment hold position.
    """

    selector: object
    driving: DrivingPolicy
    window: int
    assignments: list = field(default_factory=list)

    def start_episode(self, n_herders: int) -> None:
        self.assignments = [None] * n_herders


def controller_step(
    controller: TwoLayerController,
    world: WorldState,
    step_index: int,
    params: ModelParams,
) -> np.ndarray:
    """Velocity commands for every herder at this step."""
    n = world.herders.shape[0]
    if len(controller.assignments) != n:
        controller.start_episode(n)
    contained = contained_mask(world.targets, params)
    for i in range(n):
        assigned = controller.assignments[i]
        stale = (
            assigned is None
            or not 0 <= assigned < world.targets.shape[0]
            or contained[assigned]
        )
        if step_index % controller.window == 0 or stale:
            controller.assignments[i] = controller.selector.choose(i, world)
    commands = np.zeros((n, 2))
    active = [i for i in range(n) if controller.assignments[i] is not None]
    if active:
        ids = np.array([controller.assignments[i] for i in active])
        commands[active] = drive_batch(
            controller.driving,
            world.herders[active],
            world.targets[ids],
            world.target_vels[ids],
        )
    return commands
