"""Environment tests: gap/interval oracles, generator calibration, round-trips."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dabsim.env import (
    ArmModel,
    GeometricEnvConfig,
    PiecewiseInstance,
    compute_gaps,
    generate_geometric_instance,
    instance_from_text,
    instance_to_text,
    load_instance,
    oracle_best_mean,
    sample_reward,
    save_instance,
)


# --- brute-force oracles ----------------------------------------------------

def oracle_interval_index(instance, t):
    k = 0
    for cp in instance.change_points:
        if t >= cp:
            k += 1
    return k


def oracle_gap_summary(instance):
    means = instance.means
    num_intervals, num_arms = means.shape
    subopt = np.empty((num_intervals, num_arms))
    for k in range(num_intervals):
        best = max(means[k])
        for a in range(num_arms):
            subopt[k, a] = best - means[k, a]
    change = [
        max(abs(means[k + 1, a] - means[k, a]) for a in range(num_arms))
        for k in range(num_intervals - 1)
    ]
    starts = [1] + [int(cp) for cp in instance.change_points]
    seps = [starts[k] - starts[k - 1] for k in range(1, len(starts))]
    return subopt, change, min(seps, default=math.inf)


def small_instance():
    return PiecewiseInstance(
        num_arms=2,
        horizon=10,
        change_points=np.array([4, 8]),
        means=np.array([[0.9, 0.5], [0.2, 0.5], [0.2, 0.9]]),
    )


# --- intervals and gaps -----------------------------------------------------

def test_interval_index_frozen_example():
    inst = small_instance()
    assert [inst.interval_index(t) for t in range(1, 11)] == [0] * 3 + [1] * 4 + [2] * 3
    np.testing.assert_array_equal(inst.interval_indices(np.arange(1, 11)),
                                  [0] * 3 + [1] * 4 + [2] * 3)


def test_interval_index_matches_linear_scan():
    rng = np.random.default_rng(7)
    cfg = GeometricEnvConfig(num_arms=3, horizon=500, xi=0.35)
    for _ in range(10):
        inst = generate_geometric_instance(cfg, rng)
        for t in range(1, inst.horizon + 1):
            assert inst.interval_index(t) == oracle_interval_index(inst, t)


def test_interval_index_bounds():
    inst = small_instance()
    with pytest.raises(ValueError):
        inst.interval_index(0)
    with pytest.raises(ValueError):
        inst.interval_index(11)


def test_gap_summary_frozen_example():
    gaps = compute_gaps(small_instance())
    np.testing.assert_allclose(gaps.change_gaps, [0.7, 0.4])
    assert gaps.min_change_gap == pytest.approx(0.4)
    assert gaps.max_subopt_gap == pytest.approx(0.7)
    assert gaps.min_separation == 3.0
    np.testing.assert_allclose(gaps.subopt_gaps,
                               [[0.0, 0.4], [0.3, 0.0], [0.7, 0.0]])


def test_gap_summary_matches_bruteforce():
    rng = np.random.default_rng(11)
    cfg = GeometricEnvConfig(num_arms=4, horizon=2000, xi=0.4)
    for _ in range(25):
        inst = generate_geometric_instance(cfg, rng)
        gaps = compute_gaps(inst)
        subopt, change, min_sep = oracle_gap_summary(inst)
        np.testing.assert_allclose(gaps.subopt_gaps, subopt, atol=1e-12)
        np.testing.assert_allclose(gaps.change_gaps, change, atol=1e-12)
        assert gaps.min_separation == min_sep
        if change:
            assert gaps.min_change_gap == pytest.approx(min(change))


def test_gap_summary_without_changes():
    inst = PiecewiseInstance(num_arms=2, horizon=50,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.2, 0.6]]))
    gaps = compute_gaps(inst)
    assert gaps.change_gaps.size == 0
    assert gaps.min_change_gap == math.inf
    assert gaps.min_separation == math.inf
    assert gaps.max_subopt_gap == pytest.approx(0.4)


def test_best_mean_and_ties():
    inst = small_instance()
    for t in range(1, 11):
        assert oracle_best_mean(inst, t) == max(inst.means[oracle_interval_index(inst, t)])
    tied = PiecewiseInstance(num_arms=2, horizon=5,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.5, 0.5]]))
    assert oracle_best_mean(tied, 3) == 0.5


# --- reward sampling --------------------------------------------------------

def test_bernoulli_rewards_are_binary_and_degenerate():
    rng = np.random.default_rng(0)
    inst = PiecewiseInstance(num_arms=2, horizon=100,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.0, 1.0]]))
    assert all(sample_reward(inst, 0, t, rng) == 0.0 for t in range(1, 51))
    assert all(sample_reward(inst, 1, t, rng) == 1.0 for t in range(1, 51))


def test_bernoulli_reward_mean_concentrates():
    rng = np.random.default_rng(42)
    inst = PiecewiseInstance(num_arms=2, horizon=10,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.3, 0.8]]))
    n = 100_000
    draws = [sample_reward(inst, 0, 1, rng) for _ in range(n)]
    assert set(draws) <= {0.0, 1.0}
    assert abs(np.mean(draws) - 0.3) <= 4 * 0.5 / math.sqrt(n)


def test_gaussian_reward_mean_concentrates():
    rng = np.random.default_rng(3)
    model = ArmModel(family="gaussian", sigma=0.25)
    inst = PiecewiseInstance(num_arms=2, horizon=10,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.5, 0.1]]), arm_model=model)
    n = 100_000
    draws = [sample_reward(inst, 0, 1, rng) for _ in range(n)]
    assert abs(np.mean(draws) - 0.5) <= 4 * 0.25 / math.sqrt(n)


def test_sample_reward_validates_arm():
    inst = small_instance()
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_reward(inst, 2, 1, rng)
    with pytest.raises(ValueError):
        sample_reward(inst, -1, 1, rng)


# --- generator --------------------------------------------------------------

def test_generator_change_count_calibration():
    # xi = 0.5 at T = 10^4 gives change probability 0.01, about 100 changes
    cfg = GeometricEnvConfig(num_arms=3, horizon=10_000, xi=0.5)
    rng = np.random.default_rng(123)
    counts = [generate_geometric_instance(cfg, rng).num_changes for _ in range(300)]
    assert abs(np.mean(counts) - 100.0) <= 3.0


def test_generator_interval_length_calibration():
    # drawn interval lengths average close to T^xi (truncation trims a few %)
    cfg = GeometricEnvConfig(num_arms=2, horizon=100_000, xi=0.7)
    rng = np.random.default_rng(321)
    lengths = []
    for _ in range(2000):
        inst = generate_geometric_instance(cfg, rng)
        starts = np.concatenate(([1], inst.change_points))
        lengths.extend(np.diff(starts).tolist())
    target = 100_000 ** 0.7
    assert abs(np.mean(lengths) - target) <= 0.05 * target


def test_generator_changes_one_arm_within_magnitude():
    cfg = GeometricEnvConfig(num_arms=5, horizon=3000, xi=0.4)
    rng = np.random.default_rng(9)
    for _ in range(20):
        inst = generate_geometric_instance(cfg, rng)
        for k in range(1, inst.num_intervals):
            delta = inst.means[k] - inst.means[k - 1]
            changed = np.flatnonzero(delta != 0)
            assert changed.size == 1
            # reflection may shrink a shift but never below zero or above hi
            assert 0.0 < abs(delta[changed[0]]) <= 0.4 + 1e-12


def test_generator_gaussian_shifts_keep_drawn_magnitude():
    cfg = GeometricEnvConfig(num_arms=3, horizon=3000, xi=0.4,
                             arm_model=ArmModel(family="gaussian", sigma=0.25))
    rng = np.random.default_rng(10)
    for _ in range(20):
        inst = generate_geometric_instance(cfg, rng)
        for k in range(1, inst.num_intervals):
            shift = np.abs(inst.means[k] - inst.means[k - 1]).max()
            assert 0.1 - 1e-12 <= shift <= 0.4 + 1e-12


def test_generator_bernoulli_means_stay_in_unit_interval():
    cfg = GeometricEnvConfig(num_arms=4, horizon=2000, xi=0.35)
    rng = np.random.default_rng(5)
    for _ in range(30):
        inst = generate_geometric_instance(cfg, rng)
        assert inst.means.min() >= 0.0 and inst.means.max() <= 1.0
        assert inst.means[0].min() >= 0.1 and inst.means[0].max() <= 0.9


def test_generator_is_deterministic():
    cfg = GeometricEnvConfig(num_arms=3, horizon=5000, xi=0.5)
    a = generate_geometric_instance(cfg, np.random.default_rng(77))
    b = generate_geometric_instance(cfg, np.random.default_rng(77))
    np.testing.assert_array_equal(a.change_points, b.change_points)
    np.testing.assert_array_equal(a.means, b.means)


# --- serialization ----------------------------------------------------------

@pytest.mark.parametrize("seed", [1, 2, 3])
def test_text_round_trip(seed):
    cfg = GeometricEnvConfig(num_arms=4, horizon=1000, xi=0.4,
                             arm_model=ArmModel(family="gaussian", sigma=0.3))
    inst = generate_geometric_instance(cfg, np.random.default_rng(seed))
    back = instance_from_text(instance_to_text(inst))
    assert back.num_arms == inst.num_arms and back.horizon == inst.horizon
    assert back.arm_model == inst.arm_model
    np.testing.assert_array_equal(back.change_points, inst.change_points)
    np.testing.assert_array_equal(back.means, inst.means)


def test_text_round_trip_without_changes(tmp_path):
    inst = PiecewiseInstance(num_arms=2, horizon=9,
                             change_points=np.array([], dtype=np.int64),
                             means=np.array([[0.25, 0.75]]))
    path = tmp_path / "inst.txt"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.num_changes == 0
    np.testing.assert_array_equal(back.means, inst.means)


@pytest.mark.parametrize("text", [
    "",
    "wrong-header\narms 2\n",
    "dabsim-instance 1\narms 2\nhorizon 10\nmodel bernoulli 0.5\n",
    "dabsim-instance 1\narms 2\nhorizon 10\nmodel bernoulli 0.5\n"
    "changepoints 4\nmeans 0.1 0.2\nmeans nope 0.2\n",
    "dabsim-instance 1\nhorizon 10\narms 2\nmodel bernoulli 0.5\n"
    "changepoints\nmeans 0.1 0.2\n",
])
def test_malformed_text_rejected(text):
    with pytest.raises(ValueError):
        instance_from_text(text)


# --- validation -------------------------------------------------------------

def test_instance_validation_errors():
    ok = dict(num_arms=2, horizon=10, change_points=np.array([4]),
              means=np.array([[0.1, 0.2], [0.3, 0.2]]))
    PiecewiseInstance(**ok)
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "change_points": np.array([4, 4])},)
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "change_points": np.array([1])})
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "change_points": np.array([11])})
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "means": np.array([[0.1, 0.2]])})
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "means": np.array([[0.1, 0.2], [0.1, 0.2]])})
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "means": np.array([[0.1, 1.2], [0.3, 1.2]])})
    with pytest.raises(ValueError):
        PiecewiseInstance(**{**ok, "num_arms": 1,
                             "means": np.array([[0.1], [0.3]])})


def test_arm_model_validation():
    with pytest.raises(ValueError):
        ArmModel(family="poisson")
    with pytest.raises(ValueError):
        ArmModel(family="bernoulli", sigma=1.0)
    with pytest.raises(ValueError):
        ArmModel(family="gaussian", sigma=0.0)


def test_config_validation():
    GeometricEnvConfig()
    with pytest.raises(ValueError):
        GeometricEnvConfig(xi=0.0)
    with pytest.raises(ValueError):
        GeometricEnvConfig(xi=1.0)
    with pytest.raises(ValueError):
        GeometricEnvConfig(magnitude_range=(0.0, 0.4))
    with pytest.raises(ValueError):
        GeometricEnvConfig(magnitude_range=(0.5, 0.4))
    with pytest.raises(ValueError):
        GeometricEnvConfig(initial_mean_range=(-0.1, 0.9))
    with pytest.raises(ValueError):
        GeometricEnvConfig(magnitude_range=(0.1, 1.5))
    GeometricEnvConfig(initial_mean_range=(-1.0, 2.0),
                       arm_model=ArmModel(family="gaussian", sigma=0.5))
