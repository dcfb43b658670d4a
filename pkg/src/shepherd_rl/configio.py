"""Experiment configuration: flat text files, presets and round-tripping.

A run is described by one flat key=value file.  Keys mirror the config
dataclass fields (``model.dt``, ``trainer.batch_size``, ``episode.horizon``)
plus a handful of top-level run keys (``seed``, ``out``, ``episodes``,
``selector``, ``checkpoints``, ``perturbation_fraction``, ``workers``).
Unknown keys and malformed values raise :class:`ConfigError`.

Every scenario starts from a preset and applies the file, then the command
line, on top.  ``serialize_config`` writes the fully resolved configuration
back out in the same flat format; feeding that text (or the ``config`` block
of an emitted manifest) back in reproduces the run bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .config import (
    DRIVING_EPISODES,
    DRIVING_TRAINER,
    MULTI_EPISODES,
    MULTI_TRAINER,
    SCALE_EPISODES,
    SELECTION_EPISODES,
    SELECTION_TRAINER,
    VALIDATE_TRAINER,
    ConfigError,
    EpisodeConfig,
    ModelParams,
    RewardWeights,
    TrainerConfig,
)

SCENARIOS = (
    "train-driving",
    "train-selection",
    "train-multi",
    "validate",
    "robustness",
    "scale-demo",
    "compare",
)
SELECTORS = ("learned", "independent", "p2p")

_SECTIONS = {
    "model": ModelParams,
    "weights": RewardWeights,
    "trainer": TrainerConfig,
    "episode": EpisodeConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one run."""

    scenario: str
    seed: int
    out_dir: Path
    model: ModelParams
    weights: RewardWeights
    trainer: TrainerConfig
    episode: EpisodeConfig
    episodes_to_run: int
    selector: str = "learned"
    checkpoints: tuple[str, ...] = ()
    perturbation_fraction: float = 0.0
    workers: int = 1

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"unknown selector {self.selector!r}")
        if self.episodes_to_run < 1:
            raise ConfigError("episodes must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.perturbation_fraction < 0:
            raise ConfigError("perturbation_fraction must be non-negative")
        self.model.validate()
        self.weights.validate()
        self.trainer.validate()
        self.episode.validate()


def scenario_defaults(scenario: str) -> ExperimentConfig:
    """Preset configuration for a scenario (seed left as a placeholder)."""

    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    model = ModelParams()
    trainer, episode, episodes, fraction = {
        "train-driving": (DRIVING_TRAINER, DRIVING_EPISODES,
                          DRIVING_TRAINER.max_episodes, 0.0),
        "train-selection": (SELECTION_TRAINER, SELECTION_EPISODES,
                            SELECTION_TRAINER.max_episodes, 0.0),
        "train-multi": (MULTI_TRAINER, MULTI_EPISODES,
                        MULTI_TRAINER.max_episodes, 0.0),
        "validate": (VALIDATE_TRAINER, MULTI_EPISODES, 1000, 0.0),
        "robustness": (VALIDATE_TRAINER, MULTI_EPISODES, 200, 0.1),
        "scale-demo": (VALIDATE_TRAINER, SCALE_EPISODES, 10, 0.0),
        "compare": (VALIDATE_TRAINER, MULTI_EPISODES, 200, 0.0),
    }[scenario]
    if scenario == "scale-demo":
        # The large-population demonstration runs on the open plane.
        model = replace(model, bounded=False)
    return ExperimentConfig(
        scenario=scenario,
        seed=0,
        out_dir=Path("results") / scenario,
        model=model,
        weights=RewardWeights(),
        trainer=trainer,
        episode=episode,
        episodes_to_run=episodes,
        perturbation_fraction=fraction,
    )


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' starts a comment."""

    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat config file, or the ``config`` block of a manifest JSON."""

    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON config: {exc}") from exc
        block = payload.get("config", payload)
        if not isinstance(block, dict):
            raise ConfigError(f"{path}: JSON config block must be an object")
        return {str(k): str(v) for k, v in block.items()}
    return parse_config_text(text)


def _parse_scalar(raw: str, type_name: str, key: str):
    try:
        if type_name == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type_name}") from None


def build_config(scenario: str, values: dict[str, str]) -> ExperimentConfig:
    """Apply flat overrides to a scenario preset and validate the result.

    ``values`` is the merged file-then-command-line dictionary; later writers
    should already have overwritten earlier ones.
    """

    cfg = scenario_defaults(scenario)
    section_kwargs: dict[str, dict[str, object]] = {name: {} for name in _SECTIONS}
    top: dict[str, object] = {}
    seed_given = False

    for key, raw in values.items():
        if key == "scenario":
            if raw != scenario:
                raise ConfigError(
                    f"config file is for scenario {raw!r}, not {scenario!r}"
                )
        elif key == "seed":
            top["seed"] = _parse_scalar(raw, "int", key)
            seed_given = True
        elif key == "out":
            top["out_dir"] = Path(raw)
        elif key == "episodes":
            top["episodes_to_run"] = _parse_scalar(raw, "int", key)
        elif key == "selector":
            top["selector"] = raw
        elif key == "checkpoints":
            paths = tuple(p.strip() for p in raw.split(",") if p.strip())
            top["checkpoints"] = paths
        elif key == "perturbation_fraction":
            top["perturbation_fraction"] = _parse_scalar(raw, "float", key)
        elif key == "workers":
            top["workers"] = _parse_scalar(raw, "int", key)
        elif "." in key:
            section, _, name = key.partition(".")
            cls = _SECTIONS.get(section)
            if cls is None:
                raise ConfigError(f"unknown config section {section!r} in {key!r}")
            by_name = {f.name: f for f in fields(cls)}
            if name not in by_name:
                raise ConfigError(f"unknown key {key!r}")
            section_kwargs[section][name] = _parse_scalar(raw, by_name[name].type, key)
        else:
            raise ConfigError(f"unknown key {key!r}")

    if not seed_given:
        raise ConfigError("seed is required (set it in the config file or with --seed)")

    cfg = replace(
        cfg,
        model=replace(cfg.model, **section_kwargs["model"]),
        weights=replace(cfg.weights, **section_kwargs["weights"]),
        trainer=replace(cfg.trainer, **section_kwargs["trainer"]),
        episode=replace(cfg.episode, **section_kwargs["episode"]),
        **top,
    )
    if scenario.startswith("train-"):
        # one episode-count knob: "episodes" wins, else trainer.max_episodes,
        # and the two are kept equal in the resolved config
        if "episodes" not in values and "trainer.max_episodes" in values:
            cfg = replace(cfg, episodes_to_run=cfg.trainer.max_episodes)
        cfg = replace(cfg, trainer=replace(cfg.trainer, max_episodes=cfg.episodes_to_run))
    cfg.validate()
    return cfg


def _format_scalar(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_flat(cfg: ExperimentConfig) -> dict[str, str]:
    """Flatten a resolved config to the key=value dictionary it parses from."""

    flat: dict[str, str] = {
        "scenario": cfg.scenario,
        "seed": str(cfg.seed),
        "out": str(cfg.out_dir),
        "episodes": str(cfg.episodes_to_run),
        "selector": cfg.selector,
        "checkpoints": ",".join(cfg.checkpoints),
        "perturbation_fraction": repr(cfg.perturbation_fraction),
        "workers": str(cfg.workers),
    }
    for section in _SECTIONS:
        source = getattr(cfg, section)
        for f in fields(source):
            flat[f"{section}.{f.name}"] = _format_scalar(getattr(source, f.name))
    return flat


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render the resolved config as flat text, keys sorted."""

    flat = config_to_flat(cfg)
    return "\n".join(f"{key} = {flat[key]}" for key in sorted(flat)) + "\n"
