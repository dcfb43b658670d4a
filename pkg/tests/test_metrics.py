"""Metrics tests, including the settling-time brute-force oracle."""

import numpy as np
import pytest

from shepherd_rl.metrics import (
    CampaignSummary,
    EpisodeRecord,
    cooperative_metric,
    settling_time,
    settling_time_from_contained,
    summarize,
    write_episode_csv,
    write_summary_json,
)


def brute_force_settling(contained: np.ndarray, window: int) -> int | None:
    # independent oracle: scan every candidate start index
    contained = np.asarray(contained, dtype=bool)
    for tau in range(len(contained) - window + 1):
        if contained[tau : tau + window].all():
            return tau
    return None


def counter_success(contained: np.ndarray, window: int) -> tuple[bool, int | None]:
    # the environment's incremental counter, stopping the episode on success
    run = 0
    for i, flag in enumerate(contained):
        run = run + 1 if flag else 0
        if run >= window:
            return True, i - window + 1
    return False, None


def test_settling_time_simple_cases():
    assert settling_time_from_contained([True] * 10, 5) == 0
    assert settling_time_from_contained([False] * 4 + [True] * 6, 5) == 4
    assert settling_time_from_contained([True] * 4 + [False] + [True] * 5, 5) == 5
    assert settling_time_from_contained([True] * 4, 5) is None
    assert settling_time_from_contained([False] * 10, 3) is None


def test_settling_time_radius_interface():
    radii = np.array([9.0, 6.0, 4.0, 4.5, 5.0, 4.0, 8.0])
    assert settling_time(radii, goal_radius=5.0, containment_window=4) == 2
    assert settling_time(radii, goal_radius=5.0, containment_window=5) is None
    # multi-target series: every column must be inside
    multi = np.column_stack([radii, np.full(7, 3.0)])
    assert settling_time(multi, goal_radius=5.0, containment_window=4) == 2
    # horizon cut discards the tail
    late = np.array([9.0] * 5 + [1.0] * 10)
    assert settling_time(late, 5.0, 10, horizon=15) == 5
    assert settling_time(late, 5.0, 10, horizon=10) is None


def test_settling_time_rejects_empty():
    with pytest.raises(ValueError):
        settling_time_from_contained([], 5)
    with pytest.raises(ValueError):
        settling_time(np.zeros((2, 2, 2)), 5.0, 1)


def test_settling_time_against_brute_force_oracle():
    # 1000 synthetic containment series of varying length and persistence
    rng = np.random.default_rng(2024)
    window = 200
    agreements = 0
    for _ in range(1000):
        length = int(rng.integers(1, 1500))
        # correlated flips so long runs actually occur
        flip = rng.random(length) < 0.01
        start = bool(rng.integers(0, 2))
        contained = np.logical_xor(start, np.cumsum(flip) % 2 == 1)
        got = settling_time_from_contained(contained, window)
        want = brute_force_settling(contained, window)
        assert got == want
        success, counter_tau = counter_success(contained, window)
        assert success == (got is not None)
        if success:
            assert counter_tau == got
        agreements += 1
    assert agreements == 1000


def test_cooperative_metric_cases():
    assert cooperative_metric([(0, 1), (2, 3)]) == 1.0
    assert cooperative_metric([(0, 0), (4, 4)]) == 0.0
    assert cooperative_metric([(0, 1), (2, 2)]) == 0.5
    # idle herders never collide
    assert cooperative_metric([(None, None), (None, 3), (1, 1)]) == pytest.approx(2 / 3)
    # three herders: one shared pair breaks distinctness
    assert cooperative_metric([(0, 1, 2), (0, 1, 0)]) == 0.5


def test_cooperative_metric_relabel_invariance():
    rng = np.random.default_rng(5)
    log = [tuple(rng.integers(0, 4, 3)) for _ in range(50)]
    swapped = [(c[2], c[0], c[1]) for c in log]
    assert cooperative_metric(log) == cooperative_metric(swapped)


def test_cooperative_metric_empty_rejected():
    with pytest.raises(ValueError):
        cooperative_metric([])


def record(i, success, tau, cm=None, reward=0.0) -> EpisodeRecord:
    return EpisodeRecord(
        episode_index=i, seed=100 + i, success=success, settling_time=tau,
        cooperative_metric=cm, cumulative_reward=reward,
    )


def test_episode_record_consistency_enforced():
    with pytest.raises(ValueError):
        record(0, True, None)
    with pytest.raises(ValueError):
        record(0, False, 120)


def test_summarize_population_statistics():
    summary = summarize([record(0, True, 100), record(1, True, 300)])
    assert summary.episodes == 2
    assert summary.success_rate == 100.0
    assert summary.tau_mean == 200.0
    assert summary.tau_std == 100.0  # population, not sample
    assert summary.cm_mean is None


def test_summarize_zero_successes_and_single_episode():
    empty = summarize([record(0, False, None), record(1, False, None)])
    assert empty.success_rate == 0.0
    assert empty.tau_mean is None and empty.tau_std is None
    single = summarize([record(0, True, 42)])
    assert single.tau_mean == 42.0 and single.tau_std == 0.0


def test_summarize_truncated_variant_and_cm():
    records = [
        record(0, True, 100, cm=0.9),
        record(1, False, None, cm=0.5),
        record(2, True, 200, cm=None),
    ]
    summary = summarize(records, horizon=1000)
    assert summary.success_rate == pytest.approx(100 * 2 / 3)
    assert summary.tau_mean == 150.0
    assert summary.cm_mean == pytest.approx(0.7)
    assert summary.tau_mean_truncated == pytest.approx((100 + 1000 + 200) / 3)
    assert summary.tau_std_truncated is not None


def test_summarize_empty_rejected():
    with pytest.raises(ValueError):
        summarize([])


def test_episode_csv_golden_and_deterministic(tmp_path):
    records = [
        record(0, True, 150, cm=0.25, reward=-12.5),
        record(1, False, None, cm=None, reward=-100.0),
    ]
    path = tmp_path / "episodes.csv"
    write_episode_csv(records, path)
    content = path.read_text()
    assert content == (
        "episode,seed,success,tau_star,cm,cumulative_reward\n"
        "0,100,1,150,0.25,-12.5\n"
        "1,101,0,,,-100.0\n"
    )
    again = tmp_path / "episodes2.csv"
    write_episode_csv(records, again)
    assert again.read_bytes() == path.read_bytes()


def test_summary_json_roundtrip(tmp_path):
    summary = CampaignSummary(
        episodes=3, success_rate=66.7, tau_mean=1.5, tau_std=0.5, cm_mean=None
    )
    path = tmp_path / "summary.json"
    write_summary_json(summary, path, extra={"scenario": "validate", "seed": 7})
    import json

    loaded = json.loads(path.read_text())
    assert loaded["episodes"] == 3
    assert loaded["scenario"] == "validate"
    assert loaded["cm_mean"] is None
    assert loaded["tau_mean"] == 1.5
