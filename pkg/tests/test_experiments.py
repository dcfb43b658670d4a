"""Campaign runners: seeding, perturbation sampling, artifacts, manifests."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from shepherd_rl.config import (
    ConfigError,
    EpisodeConfig,
    ModelParams,
    RewardWeights,
)
from shepherd_rl.configio import build_config
from shepherd_rl.experiments import (
    ROBUST_FIELDS,
    EpisodeSpec,
    build_episode_spec,
    episode_model_params,
    file_digest,
    load_policies,
    make_selector,
    run_campaign,
    run_episode,
    run_scenario,
    sample_robust_params,
)
from shepherd_rl.metrics import settling_time
from shepherd_rl.network import init_network, save_checkpoint
from shepherd_rl.policies import (
    DrivingPolicy,
    IndependentSelector,
    LearnedSelector,
    P2PSelector,
)

PARAMS = ModelParams()
WEIGHTS = RewardWeights()
SHORT_EPISODE = EpisodeConfig(
    n_herders=2, n_targets=3, horizon=250, containment_window=200,
    ic_mode="disc", ic_radius=40.0,
)


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    """Tiny untrained networks saved as one checkpoint per policy role."""
    root = tmp_path_factory.mktemp("ckpts")
    rng = np.random.default_rng(0)
    paths = {}

    drive_path = root / "driving.ckpt"
    save_checkpoint(
        drive_path, init_network((6, 8, 25), rng), meta={"kind": "driving", "seed": 0}
    )
    paths["driving"] = drive_path

    multi_path = root / "multi.ckpt"
    save_checkpoint(
        multi_path,
        init_network((2 * (2 + 3), 8, 3), rng),
        meta={"kind": "multi", "nhat": 2, "mhat": 3, "seed": 0},
    )
    paths["multi"] = multi_path

    single_path = root / "single.ckpt"
    save_checkpoint(
        single_path,
        init_network((2 * (1 + 3), 8, 3), rng),
        meta={"kind": "selection", "nhat": 1, "mhat": 3, "seed": 0},
    )
    paths["single"] = single_path
    return paths


def all_paths(checkpoints) -> tuple[str, ...]:
    return tuple(str(p) for p in checkpoints.values())


# ---------------------------------------------------------------------------
# Perturbation sampling


def test_sample_robust_params_zero_fraction_is_nominal():
    drawn = sample_robust_params(PARAMS, 0.0, np.random.default_rng(1))
    assert drawn == PARAMS


def test_sample_robust_params_statistics():
    rng = np.random.default_rng(7)
    strengths = np.array(
        [
            sample_robust_params(PARAMS, 0.1, rng).repulsion_strength
            for _ in range(2000)
        ]
    )
    # repulsion_strength ~ N(20, 2^2)
    assert abs(strengths.mean() - 20.0) < 0.2
    assert abs(strengths.std() - 2.0) < 0.2


def test_sample_robust_params_touches_only_robust_fields():
    drawn = sample_robust_params(PARAMS, 0.25, np.random.default_rng(3))
    for name in ROBUST_FIELDS:
        assert getattr(drawn, name) != getattr(PARAMS, name)
    assert drawn.dt == PARAMS.dt
    assert drawn.half_extent == PARAMS.half_extent
    assert drawn.goal_radius == PARAMS.goal_radius
    assert drawn.damping == PARAMS.damping
    assert drawn.bounded == PARAMS.bounded


def test_sample_robust_params_always_positive():
    # an absurd spread forces the rejection and clamping paths
    rng = np.random.default_rng(5)
    for _ in range(300):
        drawn = sample_robust_params(PARAMS, 5.0, rng)
        for name in ROBUST_FIELDS:
            assert getattr(drawn, name) > 0


def test_sample_robust_params_rejects_negative_fraction():
    with pytest.raises(ConfigError):
        sample_robust_params(PARAMS, -0.1, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Checkpoint loading and selector construction


def test_load_policies_classifies_by_kind(checkpoints):
    bundle = load_policies(all_paths(checkpoints), PARAMS)
    assert bundle.driving is not None
    assert set(bundle.selection_by_sensed) == {1, 2}
    assert bundle.selection_by_sensed[2].mhat == 3
    assert set(bundle.digests) == set(all_paths(checkpoints))
    digest = bundle.digests[str(checkpoints["driving"])]
    assert digest == file_digest(checkpoints["driving"])


def test_load_policies_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_policies(("/nonexistent/net.ckpt",), PARAMS)


def test_load_policies_duplicate_roles(checkpoints):
    with pytest.raises(ConfigError, match="driving"):
        load_policies((str(checkpoints["driving"]),) * 2, PARAMS)
    with pytest.raises(ConfigError, match="selection"):
        load_policies((str(checkpoints["multi"]),) * 2, PARAMS)


def test_load_policies_unknown_kind(tmp_path):
    path = tmp_path / "odd.ckpt"
    save_checkpoint(path, init_network((3, 3), np.random.default_rng(0)),
                    meta={"kind": "mystery"})
    with pytest.raises(ConfigError, match="mystery"):
        load_policies((str(path),), PARAMS)


def test_make_selector_kinds(checkpoints):
    bundle = load_policies(all_paths(checkpoints), PARAMS)
    assert isinstance(make_selector("p2p", bundle, 2, PARAMS), P2PSelector)
    independent = make_selector("independent", bundle, 2, PARAMS)
    assert isinstance(independent, IndependentSelector)
    assert independent.policy.nhat == 1
    learned = make_selector("learned", bundle, 2, PARAMS)
    assert isinstance(learned, LearnedSelector)
    assert learned.policy.nhat == 2
    # no exact sensing match: fall back to the widest policy
    assert make_selector("learned", bundle, 10, PARAMS).policy.nhat == 2


def test_make_selector_missing_requirements(checkpoints):
    bundle = load_policies((str(checkpoints["driving"]),), PARAMS)
    with pytest.raises(ConfigError):
        make_selector("learned", bundle, 2, PARAMS)
    with pytest.raises(ConfigError):
        make_selector("independent", bundle, 2, PARAMS)


# ---------------------------------------------------------------------------
# Episode and campaign execution


def make_spec(checkpoints, **overrides) -> EpisodeSpec:
    bundle = load_policies(all_paths(checkpoints), PARAMS)
    spec = EpisodeSpec(
        selector_kind="learned",
        driving=bundle.driving,
        selection=bundle.selection_by_sensed[2],
        window=5,
        episode_cfg=SHORT_EPISODE,
        params=PARAMS,
        weights=WEIGHTS,
        base_seed=90,
    )
    for name, value in overrides.items():
        setattr(spec, name, value)
    return spec


def test_run_episode_is_deterministic(checkpoints):
    spec = make_spec(checkpoints)
    first = run_episode(spec, 4)
    second = run_episode(spec, 4)
    assert first.cumulative_reward == second.cumulative_reward
    assert first.settling_time == second.settling_time
    assert first.cooperative_metric == second.cooperative_metric
    assert first.seed == 94
    other = run_episode(spec, 5)
    assert other.cumulative_reward != first.cumulative_reward


def test_run_episode_driving_kind_has_no_selection_fields(checkpoints):
    cfg = EpisodeConfig(n_herders=1, n_targets=1, horizon=250,
                        containment_window=200, ic_mode="disc", ic_radius=40.0)
    spec = make_spec(checkpoints, selector_kind="driving", selection=None,
                     episode_cfg=cfg)
    record = run_episode(spec, 0)
    assert record.cooperative_metric is None
    assert record.selection_log is None


def test_recorded_series_agrees_with_settling_metric(checkpoints):
    spec = make_spec(checkpoints, record_series=True)
    for index in range(3):
        record = run_episode(spec, index)
        series = record.target_radii_series
        assert series is not None
        assert series.shape[1] == SHORT_EPISODE.n_targets
        assert series.shape[0] <= SHORT_EPISODE.horizon
        tau = settling_time(
            series, PARAMS.goal_radius, SHORT_EPISODE.containment_window
        )
        assert tau == record.settling_time
        assert record.success == (tau is not None)


def test_run_campaign_worker_count_does_not_change_results(checkpoints):
    spec = make_spec(checkpoints, episode_cfg=replace(SHORT_EPISODE, horizon=220))
    sequential = run_campaign(spec, 4, workers=1)
    parallel = run_campaign(spec, 4, workers=2)
    for a, b in zip(sequential, parallel):
        assert a.episode_index == b.episode_index
        assert a.cumulative_reward == b.cumulative_reward
        assert a.settling_time == b.settling_time


def test_perturbed_campaign_shares_initial_conditions(checkpoints):
    nominal_spec = make_spec(checkpoints)
    perturbed_spec = make_spec(checkpoints, perturbation_fraction=0.1)
    assert episode_model_params(nominal_spec, 2) == PARAMS
    drawn = episode_model_params(perturbed_spec, 2)
    assert drawn != PARAMS
    # the parameter stream is separate, so the episode stream starts equal
    from shepherd_rl.env import reset

    world_a = reset(np.random.default_rng([92, 0]), SHORT_EPISODE, PARAMS, 2)
    world_b = reset(np.random.default_rng([92, 0]), SHORT_EPISODE, drawn, 2)
    assert np.array_equal(world_a.herders, world_b.herders)
    assert np.array_equal(world_a.targets, world_b.targets)
    # and the draw is stable on recomputation
    assert episode_model_params(perturbed_spec, 2) == drawn


# ---------------------------------------------------------------------------
# Scenario entry points


def scenario_config(scenario, ckpts, out, **extra):
    values = {
        "seed": "90",
        "out": str(out),
        "checkpoints": ",".join(all_paths(ckpts)),
        "episodes": "3",
        "episode.n_herders": "2",
        "episode.n_targets": "3",
        "episode.horizon": "250",
        "episode.ic_mode": "disc",
        "episode.ic_radius": "40.0",
    }
    values.update(extra)
    return build_config(scenario, values)


def test_validate_scenario_artifacts(tmp_path, checkpoints):
    cfg = scenario_config("validate", checkpoints, tmp_path / "run")
    artifacts = run_scenario(cfg)
    episodes = artifacts["episodes"].read_text().splitlines()
    assert episodes[0] == "episode,seed,success,tau_star,cm,cumulative_reward"
    assert len(episodes) == 4
    assert episodes[1].startswith("0,90,")

    summary = json.loads(artifacts["summary"].read_text())
    assert summary["episodes"] == 3
    assert summary["scenario"] == "validate"
    assert summary["seed"] == 90
    assert set(summary["checkpoints"]) == set(all_paths(checkpoints))

    manifest = json.loads(artifacts["manifest"].read_text())
    assert manifest["scenario"] == "validate"
    assert manifest["config"]["episodes"] == "3"
    assert manifest["artifacts"]["episodes"] == artifacts["episodes"].name


def test_validate_rerun_from_manifest_is_bit_identical(tmp_path, checkpoints):
    cfg = scenario_config("validate", checkpoints, tmp_path / "one")
    first = run_scenario(cfg)
    flat = json.loads(first["manifest"].read_text())["config"]
    flat["out"] = str(tmp_path / "two")
    rerun_cfg = build_config("validate", flat)
    second = run_scenario(rerun_cfg)
    assert first["episodes"].read_bytes() == second["episodes"].read_bytes()
    first_summary = json.loads(first["summary"].read_text())
    second_summary = json.loads(second["summary"].read_text())
    assert first_summary == second_summary


def test_validate_single_pair_uses_pure_driving(tmp_path, checkpoints):
    cfg = scenario_config(
        "validate", checkpoints, tmp_path / "run",
        **{"episode.n_herders": "1", "episode.n_targets": "1"},
    )
    artifacts = run_scenario(cfg)
    rows = artifacts["episodes"].read_text().splitlines()[1:]
    # cm column is empty for the single herder-target rollout
    assert all(row.split(",")[4] == "" for row in rows)


def test_robustness_scenario_writes_param_log(tmp_path, checkpoints):
    cfg = scenario_config(
        "robustness", checkpoints, tmp_path / "run",
        perturbation_fraction="0.2",
    )
    artifacts = run_scenario(cfg)
    lines = artifacts["params"].read_text().splitlines()
    assert lines[0] == "episode," + ",".join(ROBUST_FIELDS)
    assert len(lines) == 4
    drawn = [float(x) for x in lines[1].split(",")[1:]]
    assert all(value > 0 for value in drawn)
    assert drawn != [getattr(PARAMS, name) for name in ROBUST_FIELDS]


def test_scale_scenario_series_csv(tmp_path, checkpoints):
    cfg = scenario_config(
        "scale-demo", checkpoints, tmp_path / "run",
        **{
            "episodes": "2",
            "episode.n_herders": "2",
            "episode.n_targets": "4",
            "episode.ic_mode": "annulus",
            "episode.ic_r_min": "10.0",
            "episode.ic_r_max": "20.0",
        },
    )
    assert cfg.model.bounded is False
    artifacts = run_scenario(cfg)
    lines = artifacts["series"].read_text().splitlines()
    assert lines[0] == "episode,step,mean_radius,contained_fraction"
    assert lines[1].startswith("0,1,")
    fractions = [float(line.split(",")[3]) for line in lines[1:]]
    assert all(0.0 <= f <= 1.0 for f in fractions)
    summary = json.loads(artifacts["summary"].read_text())
    assert len(summary["end_contained_fraction"]) == 2


def test_compare_scenario_table(tmp_path, checkpoints):
    cfg = scenario_config("compare", checkpoints, tmp_path / "run")
    artifacts = run_scenario(cfg)
    lines = artifacts["table"].read_text().splitlines()
    assert lines[0].startswith("selector,episodes,success_rate")
    kinds = [line.split(",")[0] for line in lines[1:]]
    assert kinds == ["learned", "independent", "p2p"]
    for kind in kinds:
        rows = artifacts[f"episodes_{kind}"].read_text().splitlines()
        assert len(rows) == 4
        # matched seeds across selectors
        assert rows[1].split(",")[1] == "90"


def test_compare_needs_two_selectors(tmp_path, checkpoints):
    cfg = scenario_config("compare", checkpoints, tmp_path / "run",
                          checkpoints=str(checkpoints["driving"]))
    with pytest.raises(ConfigError, match="at least two"):
        run_scenario(cfg)


def test_validate_needs_driving_checkpoint(tmp_path, checkpoints):
    cfg = scenario_config("validate", checkpoints, tmp_path / "run",
                          checkpoints=str(checkpoints["multi"]))
    with pytest.raises(ConfigError, match="driving"):
        run_scenario(cfg)


def test_build_episode_spec_resolves_selector(tmp_path, checkpoints):
    bundle = load_policies(all_paths(checkpoints), PARAMS)
    cfg = scenario_config("validate", checkpoints, tmp_path, selector="p2p")
    spec = build_episode_spec(cfg, bundle)
    assert spec.selector_kind == "p2p"
    assert spec.selection is None
    assert spec.window == cfg.trainer.selection_window
