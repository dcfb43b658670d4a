"""Episode scoring and campaign summaries.

Settling time follows a run-length convention: the first step index from
which every target stays inside the goal region for a full containment
window.  An episode is successful exactly when such an index exists, which
matches the environment's incremental counter.  Campaign statistics report
settling times over successful episodes (population standard deviation) and
additionally with failures truncated at the horizon, since success rates
below 100% make the plain average ambiguous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class EpisodeRecord:
    """Outcome of one validation or training episode."""

    episode_index: int
    seed: int
    success: bool
    settling_time: int | None
    cooperative_metric: float | None
    cumulative_reward: float
    target_radii_series: np.ndarray | None = None
    selection_log: list | None = None

    def __post_init__(self) -> None:
        if self.success != (self.settling_time is not None):
            raise ValueError(
                f"success={self.success} inconsistent with "
                f"settling_time={self.settling_time}"
            )


def settling_time_from_contained(
    contained: np.ndarray, containment_window: int
) -> int | None:
    """First index of a run of ``containment_window`` consecutive True entries."""
    contained = np.asarray(contained, dtype=bool)
    if contained.size == 0:
        raise ValueError("empty containment series")
    if containment_window < 1:
        raise ValueError("containment_window must be at least 1")
    run = 0
    for i, flag in enumerate(contained):
        run = run + 1 if flag else 0
        if run >= containment_window:
            return i - containment_window + 1
    return None


def settling_time(
    radii_series: np.ndarray,
    goal_radius: float,
    containment_window: int,
    horizon: int | None = None,
) -> int | None:
    """Settling step of a radii trajectory, None if the episode never settles.

    ``radii_series`` holds per-step radii: either a (steps,) series of the
    largest target radius or a (steps, m) array of all radii.  Entries past
    ``horizon`` are ignored.
    """
    series = np.asarray(radii_series, dtype=float)
    if series.ndim == 2:
        series = series.max(axis=1)
    elif series.ndim != 1:
        raise ValueError(f"radii series must be 1- or 2-dimensional, got {series.ndim}")
    if horizon is not None:
        series = series[:horizon]
    return settling_time_from_contained(series <= goal_radius, containment_window)


def cooperative_metric(selection_log: list) -> float:
    """Fraction of steps on which the herders pursue pairwise distinct targets.

    Each log entry lists one pursued target id per herder, None for an idle
    herder; idle herders never collide with anyone's choice.
    """
    if not selection_log:
        raise ValueError("empty selection log")
    distinct = 0
    for choices in selection_log:
        active = [c for c in choices if c is not None]
        if len(set(active)) == len(active):
            distinct += 1
    return distinct / len(selection_log)


@dataclass
class CampaignSummary:
    """Aggregate statistics over a batch of episode records."""

    episodes: int
    success_rate: float                    # percent over all episodes
    tau_mean: float | None                 # successful episodes only
    tau_std: float | None                  # population standard deviation
    cm_mean: float | None
    tau_mean_truncated: float | None = None  # failures counted at the horizon
    tau_std_truncated: float | None = None

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "tau_mean": self.tau_mean,
            "tau_std": self.tau_std,
            "cm_mean": self.cm_mean,
            "tau_mean_truncated": self.tau_mean_truncated,
            "tau_std_truncated": self.tau_std_truncated,
        }


def summarize(records: list[EpisodeRecord], horizon: int | None = None) -> CampaignSummary:
    """Campaign summary; pass the horizon to get truncated settling statistics."""
    if not records:
        raise ValueError("no episode records to summarize")
    successes = [r for r in records if r.success]
    taus = np.array([r.settling_time for r in successes], dtype=float)
    cms = np.array(
        [r.cooperative_metric for r in records if r.cooperative_metric is not None],
        dtype=float,
    )
    summary = CampaignSummary(
        episodes=len(records),
        success_rate=100.0 * len(successes) / len(records),
        tau_mean=float(taus.mean()) if taus.size else None,
        tau_std=float(taus.std()) if taus.size else None,
        cm_mean=float(cms.mean()) if cms.size else None,
    )
    if horizon is not None:
        trunc = np.array(
            [r.settling_time if r.success else horizon for r in records], dtype=float
        )
        summary.tau_mean_truncated = float(trunc.mean())
        summary.tau_std_truncated = float(trunc.std())
    return summary


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # repr of the Python float: shortest digits that round-trip exactly
        return repr(float(value))
    return str(value)


def write_episode_csv(records: list[EpisodeRecord], path: str | Path) -> None:
    """One row per episode; float cells use repr so reruns are byte-identical."""
    lines = ["episode,seed,success,tau_star,cm,cumulative_reward"]
    for r in records:
        lines.append(
            ",".join(
                _cell(v)
                for v in (
                    r.episode_index,
                    r.seed,
                    r.success,
                    r.settling_time,
                    r.cooperative_metric,
                    r.cumulative_reward,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_json(
    summary: CampaignSummary, path: str | Path, extra: dict | None = None
) -> None:
    payload = dict(extra or {})
    payload.update(summary.to_dict())
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
