"""Scratch diagnostic: greedy rollouts of a trained driving checkpoint."""
from __future__ import annotations

import numpy as np

from shepherd_rl.config import DRIVING_EPISODES, ModelParams, RewardWeights
from shepherd_rl.env import env_step, reset
from shepherd_rl.network import load_checkpoint
from shepherd_rl.policies import DrivingPolicy, drive


def main():
    params = ModelParams()
    weights = RewardWeights()
    cfg = DRIVING_EPISODES
    net, meta = load_checkpoint("results/acceptance/driving_seed1/driving.ckpt")
    policy = DrivingPolicy(net, params)

    for ep in range(6):
        rng = np.random.default_rng([7000 + ep, 0])
        world = reset(rng, cfg, params, episode_index=ep)
        counter = 0
        print(f"--- ep {ep}: H0 {world.herders[0].round(1)} T0 {world.targets[0].round(1)}")
        for step in range(cfg.horizon):
            cmd = drive(policy, world.herders[0], world.targets[0], world.target_vels[0])
            out = env_step(world, cmd[None, :], rng, cfg, params, weights, counter)
            world, counter = out.next_state, out.settled_counter
            if step % 250 == 0 or out.terminated:
                h, t = world.herders[0], world.targets[0]
                sep = np.linalg.norm(t - h)
                print(
                    f"  step {world.step:5d} T_r {np.linalg.norm(t):6.1f} "
                    f"sep {sep:6.1f} H_r {np.linalg.norm(h):6.1f} "
                    f"cmd {cmd.round(1)} counter {counter}"
                )
            if out.terminated:
                break
        print(f"  success={counter >= cfg.containment_window}")


if __name__ == "__main__":
    main()
