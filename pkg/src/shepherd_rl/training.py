"""Deep Q-learning loops for the driving and target-selection policies.

One learner couples an online network, a periodically synced target network,
a replay buffer and an Adam optimizer.  Exploration is epsilon-greedy with a
linear decay per learn step.  All randomness flows through a single generator
per run, with a fixed draw order (decision draws in herder order, then the
environment noise block, then minibatch indices), so a seed pins the whole
parameter trajectory.  Deployment probes, when enabled, draw from their own
fixed seed streams and leave the training draw order untouched.

Stored transitions distinguish why an episode ended: settling is a real
terminal state (TD target is the reward alone), while a horizon cutoff is a
bookkeeping stop, so its transition still bootstraps.  Time is not part of
any observation, and marking cutoffs terminal would hand identical-looking
states wildly different targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    DRIVING_ACTIONS,
    DRIVING_HIDDEN,
    SELECTION_HIDDEN,
    EpisodeConfig,
    ModelParams,
    RewardWeights,
    TrainerConfig,
)
from .env import build_low_obs, build_selection_obs, env_step, reset
from .network import Adam, QNetwork, backward_mse, forward, init_network, sync
from .policies import DrivingPolicy, decode_action, drive_batch
from .replay import ReplayBuffer, Transition

# ten consecutive successful cycles through the four start quadrants
DRIVING_EARLY_STOP_STREAK = 40


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Random action with probability epsilon, else argmax (ties: lowest index).

    Always consumes one uniform draw, plus one integer draw when exploring,
    so trajectories stay aligned across policies with different q-values.
    """
    if rng.random() < epsilon:
        return int(rng.integers(0, q_values.shape[0]))
    return int(np.argmax(q_values))


def td_target(transition: Transition, target_net: QNetwork, discount: float) -> float:
    """One-step TD target: the reward alone on terminal transitions."""
    if transition.terminal:
        return transition.reward
    return transition.reward + discount * float(np.max(forward(target_net, transition.next_state)))


def batch_td_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminals: np.ndarray,
    target_net: QNetwork,
    discount: float,
) -> np.ndarray:
    best_next = np.max(forward(target_net, next_states), axis=1)
    return rewards + discount * best_next * ~terminals


@dataclass
class DQNLearner:
    """Online/target network pair with replay and scheduled exploration."""

    online: QNetwork
    target: QNetwork
    buffer: ReplayBuffer
    optimizer: Adam
    config: TrainerConfig
    learn_count: int = 0

    def epsilon(self) -> float:
        return max(
            self.config.epsilon_floor,
            self.config.epsilon_start - self.learn_count * self.config.epsilon_decay,
        )

    def learn_step(self, rng: np.random.Generator) -> float | None:
        """One minibatch update; no-op (None) while the buffer warms up."""
        if len(self.buffer) < self.config.buffer_warmup:
            return None
        states, actions, rewards, next_states, terminals = self.buffer.sample(
            self.config.batch_size, rng
        )
        targets = batch_td_targets(
            rewards, next_states, terminals, self.target, self.config.discount
        )
        loss, grads_w, grads_b = backward_mse(self.online, states, actions, targets)
        if self.config.grad_clip > 0:
            clip = self.config.grad_clip
            grads_w = [np.clip(g, -clip, clip) for g in grads_w]
            grads_b = [np.clip(g, -clip, clip) for g in grads_b]
        self.optimizer.update(self.online, grads_w, grads_b)
        self.learn_count += 1
        if self.learn_count % self.config.target_sync_every == 0:
            sync(self.target, self.online)
        return loss


def make_learner(
    layer_dims: tuple[int, ...], config: TrainerConfig, rng: np.random.Generator
) -> DQNLearner:
    online = init_network(layer_dims, rng)
    return DQNLearner(
        online=online,
        target=online.copy(),
        buffer=ReplayBuffer(config.buffer_capacity, layer_dims[0]),
        optimizer=Adam(learning_rate=config.learning_rate),
        config=config,
    )


@dataclass
class CurvePoint:
    """One learning-curve row."""

    episode: int
    cumulative_reward: float
    success: bool
    epsilon: float
    cm: float | None = None


@dataclass
class TrainResult:
    """Trained parameters plus the per-episode learning curve."""

    network: QNetwork
    curve: list[CurvePoint]
    early_stop_episode: int | None
    meta: dict = field(default_factory=dict)


def write_curve_csv(curve: list[CurvePoint], path: str | Path) -> None:
    lines = ["episode,cumulative_reward,success,epsilon,cm"]
    for p in curve:
        cm = "" if p.cm is None else repr(p.cm)
        lines.append(
            f"{p.episode},{p.cumulative_reward!r},{int(p.success)},{p.epsilon!r},{cm}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _greedy_episode(
    net: QNetwork,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    rng: np.random.Generator,
    episode_index: int,
) -> tuple[bool, int]:
    """Run one deterministic-policy driving episode; (settled, settling time)."""
    world = reset(rng, episode_cfg, params, episode_index=episode_index)
    counter = 0
    for _ in range(episode_cfg.horizon):
        obs = build_low_obs(
            world.herders[0], world.targets[0], world.target_vels[0], params
        )
        action = int(np.argmax(forward(net, obs)))
        command = decode_action(action, params)
        out = env_step(
            world, command[None, :], rng, episode_cfg, params, weights, counter
        )
        world, counter = out.next_state, out.settled_counter
        if out.terminated:
            break
    settled = counter >= episode_cfg.containment_window
    return settled, world.step - episode_cfg.containment_window


def _probe(
    net: QNetwork,
    trainer: TrainerConfig,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    seed: int,
    episode: int,
) -> tuple[int, float]:
    """Score a frozen network over greedy probe episodes: (wins, mean tau)."""
    wins = 0
    taus = []
    for j in range(trainer.probe_episodes):
        rng = np.random.default_rng([seed, 2, episode, j])
        settled, tau = _greedy_episode(net, episode_cfg, params, weights, rng, j)
        if settled:
            wins += 1
            taus.append(tau)
    return wins, float(np.mean(taus)) if taus else float("inf")


def train_driving(
    trainer: TrainerConfig,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    seed: int,
) -> TrainResult:
    """Learn the low-level driving policy on the one-herder one-target task.

    Initial conditions cycle through the four quadrants; training stops early
    once DRIVING_EARLY_STOP_STREAK consecutive episodes settle.  The returned
    network is the snapshot taken at the longest success streak seen, unless
    ``probe_every`` is set: then frozen copies are scored periodically on
    greedy held-out episodes (a dedicated seed stream, so the training
    trajectory is unchanged) and the best-scoring copy is returned instead.
    """
    if episode_cfg.n_herders != 1 or episode_cfg.n_targets != 1:
        raise ValueError("driving training is a one-herder one-target scenario")
    rng = np.random.default_rng(seed)
    dims = (6,) + DRIVING_HIDDEN + (DRIVING_ACTIONS,)
    learner = make_learner(dims, trainer, rng)
    curve: list[CurvePoint] = []
    best = learner.online.copy()
    best_streak = 0
    streak = 0
    early_stop = None
    probe_best: tuple[float, float] | None = None
    probe_best_episode = None

    def run_probe(episode: int) -> None:
        nonlocal best, probe_best, probe_best_episode
        wins, tau = _probe(
            learner.online, trainer, episode_cfg, params, weights, seed, episode
        )
        key = (-wins, tau)
        if probe_best is None or key < probe_best:
            probe_best = key
            probe_best_episode = episode
            best = learner.online.copy()

    for episode in range(trainer.max_episodes):
        world = reset(rng, episode_cfg, params, episode_index=episode)
        counter = 0
        total = 0.0
        eps_at_start = learner.epsilon()
        for _ in range(episode_cfg.horizon):
            obs = build_low_obs(
                world.herders[0], world.targets[0], world.target_vels[0], params
            )
            action = epsilon_greedy(forward(learner.online, obs), learner.epsilon(), rng)
            command = decode_action(action, params)
            out = env_step(
                world, command[None, :], rng, episode_cfg, params, weights, counter
            )
            next_obs = build_low_obs(
                out.next_state.herders[0],
                out.next_state.targets[0],
                out.next_state.target_vels[0],
                params,
            )
            settled = out.settled_counter >= episode_cfg.containment_window
            learner.buffer.push(obs, action, out.reward, next_obs, settled)
            learner.learn_step(rng)
            total += out.reward
            world, counter = out.next_state, out.settled_counter
            if out.terminated:
                break
        success = counter >= episode_cfg.containment_window
        streak = streak + 1 if success else 0
        if streak > best_streak:
            best_streak = streak
            if not trainer.probe_every:
                best = learner.online.copy()
        curve.append(
            CurvePoint(
                episode=episode, cumulative_reward=total, success=success,
                epsilon=eps_at_start,
            )
        )
        if trainer.probe_every and (episode + 1) % trainer.probe_every == 0:
            run_probe(episode)
        if streak >= DRIVING_EARLY_STOP_STREAK:
            early_stop = episode
            break

    if trainer.probe_every:
        # cover early-stop exits and budgets that are not probe-aligned
        run_probe(len(curve) - 1)

    meta = {
        "kind": "driving",
        "seed": seed,
        "episodes_run": len(curve),
        "best_streak": best_streak,
        "learn_steps": learner.learn_count,
    }
    if trainer.probe_every:
        meta["probe_best_episode"] = probe_best_episode
        meta["probe_best_wins"] = int(-probe_best[0])
        meta["probe_best_tau"] = None if probe_best[0] == 0 else probe_best[1]
    return TrainResult(
        network=best,
        curve=curve,
        early_stop_episode=early_stop,
        meta=meta,
    )


def _train_selection_core(
    trainer: TrainerConfig,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    driving: DrivingPolicy,
    seed: int,
    record_cm: bool,
) -> TrainResult:
    """Shared selection-training loop for any herder count.

    Every ``selection_window`` steps each herder epsilon-greedily picks one of
    its mhat target slots (an invalid padded slot means idling for the
    window).  The held assignments feed the frozen driving policy in between.
    At each decision boundary every herder stores one transition carrying the
    summed global reward of the closed window, and one learn step runs.
    """
    n = episode_cfg.n_herders
    nhat, mhat = n, episode_cfg.n_targets
    rng = np.random.default_rng(seed)
    dims = (2 * (nhat + mhat),) + SELECTION_HIDDEN + (mhat,)
    learner = make_learner(dims, trainer, rng)
    window = trainer.selection_window
    curve: list[CurvePoint] = []

    for episode in range(trainer.max_episodes):
        world = reset(rng, episode_cfg, params, episode_index=episode)
        counter = 0
        total = 0.0
        eps_at_start = learner.epsilon()
        open_obs: list[np.ndarray | None] = [None] * n
        open_actions = [0] * n
        window_reward = 0.0
        assignments: list[int | None] = [None] * n
        selection_log: list[tuple] = []

        for step in range(episode_cfg.horizon):
            if step % window == 0:
                obs_now = [
                    build_selection_obs(i, world, nhat, mhat, params) for i in range(n)
                ]
                if open_obs[0] is not None:
                    for i in range(n):
                        learner.buffer.push(
                            open_obs[i],
                            open_actions[i],
                            window_reward,
                            obs_now[i].vector,
                            False,
                        )
                    learner.learn_step(rng)
                eps = learner.epsilon()
                for i in range(n):
                    action = epsilon_greedy(
                        forward(learner.online, obs_now[i].vector), eps, rng
                    )
                    open_obs[i] = obs_now[i].vector
                    open_actions[i] = action
                    slot_target = int(obs_now[i].slot_targets[action])
                    assignments[i] = slot_target if slot_target >= 0 else None
                window_reward = 0.0

            commands = np.zeros((n, 2))
            active = [i for i in range(n) if assignments[i] is not None]
            if active:
                ids = np.array([assignments[i] for i in active])
                commands[active] = drive_batch(
                    driving, world.herders[active], world.targets[ids], world.target_vels[ids]
                )
            out = env_step(world, commands, rng, episode_cfg, params, weights, counter)
            window_reward += out.reward
            total += out.reward
            if record_cm:
                selection_log.append(tuple(assignments))
            world, counter = out.next_state, out.settled_counter
            if out.terminated:
                settled = out.settled_counter >= episode_cfg.containment_window
                for i in range(n):
                    end_obs = build_selection_obs(i, world, nhat, mhat, params)
                    learner.buffer.push(
                        open_obs[i],
                        open_actions[i],
                        window_reward,
                        end_obs.vector,
                        settled,
                    )
                learner.learn_step(rng)
                break

        success = counter >= episode_cfg.containment_window
        cm = None
        if record_cm and selection_log:
            from .metrics import cooperative_metric

            cm = cooperative_metric(selection_log)
        curve.append(
            CurvePoint(
                episode=episode, cumulative_reward=total, success=success,
                epsilon=eps_at_start, cm=cm,
            )
        )

    return TrainResult(
        network=learner.online,
        curve=curve,
        early_stop_episode=None,
        meta={
            "kind": "selection",
            "nhat": nhat,
            "mhat": mhat,
            "seed": seed,
            "episodes_run": len(curve),
            "learn_steps": learner.learn_count,
        },
    )


def train_selection(
    trainer: TrainerConfig,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    driving: DrivingPolicy,
    seed: int,
) -> TrainResult:
    """Single-herder target-selection training (observation layout nhat=1)."""
    if episode_cfg.n_herders != 1:
        raise ValueError("selection training uses one herder; see train_multi")
    if episode_cfg.n_targets < 2:
        raise ValueError("selection training needs at least two targets")
    return _train_selection_core(
        trainer, episode_cfg, params, weights, driving, seed, record_cm=False
    )


def train_multi(
    trainer: TrainerConfig,
    episode_cfg: EpisodeConfig,
    params: ModelParams,
    weights: RewardWeights,
    driving: DrivingPolicy,
    seed: int,
) -> TrainResult:
    """Parameter-shared multi-herder selection training.

    All herders act with the same online network and push their transitions,
    carrying the shared global reward, into one buffer; the per-episode
    cooperative metric is recorded on the learning curve.
    """
    if episode_cfg.n_herders < 2:
        raise ValueError("multi-herder training needs at least two herders")
    result = _train_selection_core(
        trainer, episode_cfg, params, weights, driving, seed, record_cm=True
    )
    result.meta["kind"] = "multi"
    return result
