"""Campaign runners: training scenarios, frozen-policy validation and reports.

Every scenario reads one resolved :class:`ExperimentConfig`, writes its
artifacts under the configured output directory and finishes with a
``manifest.json`` capturing the full flat config, the digests of every input
checkpoint and the produced files.  Feeding that manifest back in as the
config reproduces the run bit for bit.

Validation episodes are seeded independently of each other: episode ``i``
draws from ``default_rng([base_seed + i, 0])``, and robustness parameter
perturbations from ``default_rng([base_seed + i, 1])``.  Campaigns with the
same base seed therefore share initial conditions and noise exactly, whether
run sequentially or across worker processes, and a perturbed campaign is
paired step for step with its unperturbed twin.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    EpisodeConfig,
    ModelParams,
    RewardWeights,
)
from .configio import ExperimentConfig, config_to_flat
from .env import env_step, reset
from .metrics import (
    CampaignSummary,
    EpisodeRecord,
    _cell,
    cooperative_metric,
    summarize,
    write_episode_csv,
    write_summary_json,
)
from .network import load_checkpoint, save_checkpoint
from .policies import (
    DrivingPolicy,
    IndependentSelector,
    LearnedSelector,
    P2PSelector,
    SelectionPolicy,
    TwoLayerController,
    controller_step,
    drive_batch,
)
from .training import train_driving, train_multi, train_selection, write_curve_csv

# Model constants redrawn per episode by the robustness scenario.
ROBUST_FIELDS = (
    "target_speed_max",
    "noise_sigma",
    "repulsion_strength",
    "repulsion_range",
)
_MAX_REDRAWS = 100


def file_digest(path: str | Path) -> str:
    """Hex sha256 of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sample_robust_params(
    nominal: ModelParams, fraction: float, rng: np.random.Generator
) -> ModelParams:
    """Gaussian perturbation of the robustness-tested model constants.

    Each field in :data:`ROBUST_FIELDS` is redrawn from a normal with mean at
    its nominal value and standard deviation ``fraction`` times that value.
    Non-positive draws are rejected (at most 100 redraws per field, then the
    value is clamped to one percent of nominal).  ``fraction=0`` returns the
    nominal values exactly.  The result is not re-validated: an extreme
    fraction may produce physically hostile regimes on purpose.
    """
    if fraction < 0:
        raise ConfigError(f"perturbation fraction must be non-negative, got {fraction}")
    updates: dict[str, float] = {}
    for name in ROBUST_FIELDS:
        mean = getattr(nominal, name)
        value = rng.normal(mean, fraction * mean)
        redraws = 0
        while value <= 0 and redraws < _MAX_REDRAWS:
            value = rng.normal(mean, fraction * mean)
            redraws += 1
        if value <= 0:
            value = 0.01 * mean
        updates[name] = float(value)
    return replace(nominal, **updates)


@dataclass
class PolicyBundle:
    """Checkpointed policies available to a scenario, keyed by their role."""

    driving: DrivingPolicy | None
    selection_by_sensed: dict[int, SelectionPolicy]  # key: sensed herder count
    digests: dict[str, str]                          # checkpoint path -> sha256


def load_policies(
    checkpoint_paths: tuple[str, ...], params: ModelParams
) -> PolicyBundle:
    """Load and classify checkpoints by the ``kind`` recorded in their meta."""
    driving: DrivingPolicy | None = None
    selection: dict[int, SelectionPolicy] = {}
    digests: dict[str, str] = {}
    for raw_path in checkpoint_paths:
        path = Path(raw_path)
        if not path.is_file():
            raise ConfigError(f"checkpoint not found: {path}")
        net, meta = load_checkpoint(path)
        digests[str(path)] = file_digest(path)
        kind = meta.get("kind")
        if kind == "driving":
            if driving is not None:
                raise ConfigError("more than one driving checkpoint supplied")
            driving = DrivingPolicy(net, params)
        elif kind in ("selection", "multi"):
            sensed = int(meta["nhat"])
            if sensed in selection:
                raise ConfigError(
                    f"more than one selection checkpoint senses {sensed} herders"
                )
            selection[sensed] = SelectionPolicy(net, sensed, int(meta["mhat"]))
        else:
            raise ConfigError(f"{path}: checkpoint kind {kind!r} is not usable here")
    return PolicyBundle(driving, selection, digests)


def make_selector(
    kind: str, bundle: PolicyBundle, n_herders: int, params: ModelParams
):
    """Instantiate a target selector of the requested kind.

    ``learned`` prefers a selection policy whose sensed herder count matches
    the deployed one and otherwise falls back to the widest available policy
    (its nearest-neighbour observation generalises to larger groups).
    """
    if kind == "p2p":
        return P2PSelector(params)
    if kind == "independent":
        policy = bundle.selection_by_sensed.get(1)
        if policy is None:
            raise ConfigError(
                "independent selection needs a single-herder selection checkpoint"
            )
        return IndependentSelector(policy, params)
    if kind == "learned":
        if not bundle.selection_by_sensed:
            raise ConfigError("learned selection needs a selection checkpoint")
        policy = bundle.selection_by_sensed.get(n_herders)
        if policy is None:
            policy = bundle.selection_by_sensed[max(bundle.selection_by_sensed)]
        return LearnedSelector(policy, params)
    raise ConfigError(f"unknown selector {kind!r}")


@dataclass
class EpisodeSpec:
    """Picklable description of one frozen-policy evaluation episode.

    ``selector_kind`` is ``driving`` for the raw single-herder single-target
    rollout (no selection layer), otherwise one of the selector names.
    """

    selector_kind: str
    driving: DrivingPolicy
    selection: SelectionPolicy | None
    window: int
    episode_cfg: EpisodeConfig
    params: ModelParams
    weights: RewardWeights
    base_seed: int
    perturbation_fraction: float = 0.0
    record_series: bool = False


def episode_model_params(spec: EpisodeSpec, index: int) -> ModelParams:
    """Model constants governing episode ``index`` (perturbed when asked).

    The perturbation stream is separate from the episode stream, so perturbed
    and unperturbed campaigns with equal base seeds share initial conditions.
    """
    if spec.perturbation_fraction == 0:
        return spec.params
    param_rng = np.random.default_rng([spec.base_seed + index, 1])
    return sample_robust_params(spec.params, spec.perturbation_fraction, param_rng)


def _spec_selector(spec: EpisodeSpec):
    bundle = PolicyBundle(
        spec.driving,
        {spec.selection.nhat: spec.selection} if spec.selection is not None else {},
        {},
    )
    return make_selector(
        spec.selector_kind, bundle, spec.episode_cfg.n_herders, spec.params
    )


def run_episode(spec: EpisodeSpec, index: int) -> EpisodeRecord:
    """Roll one evaluation episode and reduce it to an episode record.

    The policies observe and act through the nominal model constants they
    were built with; only the environment dynamics use the perturbed ones.
    """
    rng = np.random.default_rng([spec.base_seed + index, 0])
    env_params = episode_model_params(spec, index)
    cfg = spec.episode_cfg
    world = reset(rng, cfg, env_params, index)

    driving_only = spec.selector_kind == "driving"
    controller = None
    if not driving_only:
        controller = TwoLayerController(_spec_selector(spec), spec.driving, spec.window)
        controller.start_episode(cfg.n_herders)
    record_cm = not driving_only and cfg.n_herders >= 2

    counter = 0
    total = 0.0
    selection_log: list | None = [] if record_cm else None
    radii_rows: list[np.ndarray] | None = [] if spec.record_series else None
    while True:
        if driving_only:
            commands = drive_batch(
                spec.driving, world.herders, world.targets, world.target_vels
            )
        else:
            commands = controller_step(controller, world, world.step, spec.params)
            if record_cm:
                selection_log.append(tuple(controller.assignments))
        outcome = env_step(
            world, commands, rng, cfg, env_params, spec.weights, counter
        )
        total += outcome.reward
        world, counter = outcome.next_state, outcome.settled_counter
        if radii_rows is not None:
            radii_rows.append(np.linalg.norm(world.targets, axis=1))
        if outcome.terminated:
            break

    success = counter >= cfg.containment_window
    tau = world.step - cfg.containment_window if success else None
    return EpisodeRecord(
        episode_index=index,
        seed=spec.base_seed + index,
        success=success,
        settling_time=tau,
        cooperative_metric=cooperative_metric(selection_log) if record_cm else None,
        cumulative_reward=total,
        target_radii_series=np.array(radii_rows) if radii_rows is not None else None,
        selection_log=selection_log,
    )


def run_campaign(
    spec: EpisodeSpec, episodes: int, workers: int = 1
) -> list[EpisodeRecord]:
    """Run an episode batch; the record order never depends on ``workers``."""
    if workers <= 1:
        return [run_episode(spec, index) for index in range(episodes)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_episode, spec, index) for index in range(episodes)]
        return [future.result() for future in futures]


def build_episode_spec(
    cfg: ExperimentConfig, bundle: PolicyBundle, record_series: bool = False
) -> EpisodeSpec:
    """Resolve the evaluation episode recipe for a campaign scenario."""
    if bundle.driving is None:
        raise ConfigError(f"{cfg.scenario} needs a driving checkpoint")
    single = cfg.episode.n_herders == 1 and cfg.episode.n_targets == 1
    kind = "driving" if single else cfg.selector
    selection = None
    if kind in ("learned", "independent"):
        selector = make_selector(kind, bundle, cfg.episode.n_herders, cfg.model)
        selection = selector.policy
    return EpisodeSpec(
        selector_kind=kind,
        driving=bundle.driving,
        selection=selection,
        window=cfg.trainer.selection_window,
        episode_cfg=cfg.episode,
        params=cfg.model,
        weights=cfg.weights,
        base_seed=cfg.seed,
        perturbation_fraction=(
            cfg.perturbation_fraction if cfg.scenario == "robustness" else 0.0
        ),
        record_series=record_series,
    )


def compare_policies(
    cfg: ExperimentConfig, bundle: PolicyBundle
) -> list[tuple[str, list[EpisodeRecord], CampaignSummary]]:
    """Evaluate every selector the checkpoints support on matched seeds."""
    available = []
    for kind in ("learned", "independent", "p2p"):
        try:
            make_selector(kind, bundle, cfg.episode.n_herders, cfg.model)
        except ConfigError:
            continue
        available.append(kind)
    if len(available) < 2:
        raise ConfigError(
            "compare needs checkpoints for at least two selectors "
            f"(only {available} available)"
        )
    results = []
    for kind in available:
        spec = build_episode_spec(replace(cfg, selector=kind), bundle)
        records = run_campaign(spec, cfg.episodes_to_run, cfg.workers)
        results.append((kind, records, summarize(records, cfg.episode.horizon)))
    return results


# ---------------------------------------------------------------------------
# Scenario entry points


def _write_manifest(
    cfg: ExperimentConfig,
    artifacts: dict[str, Path],
    digests: dict[str, str],
    results: dict | None = None,
) -> Path:
    path = cfg.out_dir / "manifest.json"
    payload = {
        "package_version": __version__,
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config": config_to_flat(cfg),
        "checkpoints": digests,
        "artifacts": {name: str(p.name) for name, p in artifacts.items()},
        "results": results or {},
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _run_training(cfg: ExperimentConfig) -> dict[str, Path]:
    out = cfg.out_dir
    trainer = replace(cfg.trainer, max_episodes=cfg.episodes_to_run)
    digests: dict[str, str] = {}
    if cfg.scenario == "train-driving":
        result = train_driving(trainer, cfg.episode, cfg.model, cfg.weights, cfg.seed)
        stem = "driving"
    else:
        bundle = load_policies(cfg.checkpoints, cfg.model)
        if bundle.driving is None:
            raise ConfigError(f"{cfg.scenario} needs a driving checkpoint")
        digests = bundle.digests
        train = train_selection if cfg.scenario == "train-selection" else train_multi
        result = train(
            trainer, cfg.episode, cfg.model, cfg.weights, bundle.driving, cfg.seed
        )
        stem = "selection" if cfg.scenario == "train-selection" else "multi"

    ckpt_path = out / f"{stem}.ckpt"
    save_checkpoint(ckpt_path, result.network, meta=result.meta)
    curve_path = out / f"{cfg.scenario}_curve.csv"
    write_curve_csv(result.curve, curve_path)
    artifacts = {"checkpoint": ckpt_path, "curve": curve_path}
    results = dict(result.meta)
    results["early_stop_episode"] = result.early_stop_episode
    results["checkpoint_digest"] = file_digest(ckpt_path)
    artifacts["manifest"] = _write_manifest(cfg, artifacts, digests, results)
    return artifacts


def _campaign_extra(cfg: ExperimentConfig, digests: dict[str, str]) -> dict:
    return {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "selector": cfg.selector,
        "checkpoints": digests,
    }


def _run_validate(cfg: ExperimentConfig) -> dict[str, Path]:
    bundle = load_policies(cfg.checkpoints, cfg.model)
    spec = build_episode_spec(cfg, bundle)
    records = run_campaign(spec, cfg.episodes_to_run, cfg.workers)
    summary = summarize(records, cfg.episode.horizon)

    episodes_path = cfg.out_dir / f"{cfg.scenario}_episodes.csv"
    write_episode_csv(records, episodes_path)
    summary_path = cfg.out_dir / f"{cfg.scenario}_summary.json"
    write_summary_json(summary, summary_path, extra=_campaign_extra(cfg, bundle.digests))
    artifacts = {"episodes": episodes_path, "summary": summary_path}

    if cfg.scenario == "robustness":
        params_path = cfg.out_dir / "robustness_params.csv"
        _write_sampled_params(spec, cfg.episodes_to_run, params_path)
        artifacts["params"] = params_path

    results = {
        "episodes": summary.episodes,
        "success_rate": summary.success_rate,
        "tau_mean": summary.tau_mean,
        "cm_mean": summary.cm_mean,
    }
    artifacts["manifest"] = _write_manifest(cfg, artifacts, bundle.digests, results)
    return artifacts


def _write_sampled_params(spec: EpisodeSpec, episodes: int, path: Path) -> None:
    lines = ["episode," + ",".join(ROBUST_FIELDS)]
    for index in range(episodes):
        drawn = episode_model_params(spec, index)
        cells = [_cell(getattr(drawn, name)) for name in ROBUST_FIELDS]
        lines.append(f"{index}," + ",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def _run_scale(cfg: ExperimentConfig) -> dict[str, Path]:
    bundle = load_policies(cfg.checkpoints, cfg.model)
    spec = build_episode_spec(cfg, bundle, record_series=True)
    records = run_campaign(spec, cfg.episodes_to_run, cfg.workers)
    summary = summarize(records, cfg.episode.horizon)

    episodes_path = cfg.out_dir / "scale-demo_episodes.csv"
    write_episode_csv(records, episodes_path)
    series_path = cfg.out_dir / "scale-demo_series.csv"
    end_fractions = _write_series_csv(records, series_path, cfg.model.goal_radius)
    summary_path = cfg.out_dir / "scale-demo_summary.json"
    extra = _campaign_extra(cfg, bundle.digests)
    extra["end_contained_fraction"] = end_fractions
    write_summary_json(summary, summary_path, extra=extra)

    artifacts = {
        "episodes": episodes_path,
        "series": series_path,
        "summary": summary_path,
    }
    results = {"end_contained_fraction": end_fractions}
    artifacts["manifest"] = _write_manifest(cfg, artifacts, bundle.digests, results)
    return artifacts


def _write_series_csv(
    records: list[EpisodeRecord], path: Path, goal_radius: float
) -> list[float]:
    """Per-step population radius curves; returns each episode's end fraction."""
    lines = ["episode,step,mean_radius,contained_fraction"]
    end_fractions: list[float] = []
    for record in records:
        series = record.target_radii_series
        means = series.mean(axis=1)
        fractions = (series <= goal_radius).mean(axis=1)
        for step in range(series.shape[0]):
            lines.append(
                f"{record.episode_index},{step + 1},"
                f"{_cell(means[step])},{_cell(fractions[step])}"
            )
        end_fractions.append(float(fractions[-1]))
    Path(path).write_text("\n".join(lines) + "\n")
    return end_fractions


def _run_compare(cfg: ExperimentConfig) -> dict[str, Path]:
    bundle = load_policies(cfg.checkpoints, cfg.model)
    results = compare_policies(cfg, bundle)

    artifacts: dict[str, Path] = {}
    table = [
        "selector,episodes,success_rate,tau_mean,tau_std,"
        "tau_mean_truncated,tau_std_truncated,cm_mean"
    ]
    manifest_results: dict[str, dict] = {}
    for kind, records, summary in results:
        episodes_path = cfg.out_dir / f"compare_{kind}_episodes.csv"
        write_episode_csv(records, episodes_path)
        artifacts[f"episodes_{kind}"] = episodes_path
        table.append(
            ",".join(
                [
                    kind,
                    str(summary.episodes),
                    _cell(summary.success_rate),
                    _cell(summary.tau_mean),
                    _cell(summary.tau_std),
                    _cell(summary.tau_mean_truncated),
                    _cell(summary.tau_std_truncated),
                    _cell(summary.cm_mean),
                ]
            )
        )
        manifest_results[kind] = {
            "success_rate": summary.success_rate,
            "tau_mean": summary.tau_mean,
            "cm_mean": summary.cm_mean,
        }
    table_path = cfg.out_dir / "compare_table.csv"
    table_path.write_text("\n".join(table) + "\n")
    artifacts["table"] = table_path
    artifacts["manifest"] = _write_manifest(
        cfg, artifacts, bundle.digests, manifest_results
    )
    return artifacts


def run_scenario(cfg: ExperimentConfig) -> dict[str, Path]:
    """Execute a scenario end to end; returns the artifact paths."""
    cfg.validate()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.scenario in ("train-driving", "train-selection", "train-multi"):
        return _run_training(cfg)
    if cfg.scenario in ("validate", "robustness"):
        return _run_validate(cfg)
    if cfg.scenario == "scale-demo":
        return _run_scale(cfg)
    if cfg.scenario == "compare":
        return _run_compare(cfg)
    raise ConfigError(f"unknown scenario {cfg.scenario!r}")
