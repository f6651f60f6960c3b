"""Detector statistics vs brute-force likelihood oracles, thresholds, and streaming behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dabsim.detectors import (
    ChangeDetector,
    DetectorConfig,
    beta_threshold,
    glr_statistic,
    gsr_statistic,
    measure_false_alarm_rate,
    measure_latency_profile,
    prefix_sums,
    write_trace_csv,
)

# ---------------------------------------------------------------------------
# brute-force oracles: raw per-sample log-likelihoods, profiled at (clamped)
# segment means, scanning every split: no prefix sums, no collapsed algebra


def oracle_split_ll(x, s, variant, sigma, eps=1e-9):
    x = np.asarray(x, dtype=float)

    if variant == "gaussian":
        def ll(seg, mu):
            return float(np.sum(-(seg - mu) ** 2 / (2 * sigma**2)))
    else:
        def ll(seg, p):
            p = min(max(p, eps), 1 - eps)
            return float(np.sum(seg * math.log(p) + (1 - seg) * math.log1p(-p)))

    den = ll(x, x.mean())
    if s == len(x):
        return 0.0
    return ll(x[:s], x[:s].mean()) + ll(x[s:], x[s:].mean()) - den


def oracle_glr(x, variant, sigma=0.5):
    n = len(x)
    vals = [oracle_split_ll(x, s, variant, sigma) for s in range(1, n)]
    return max(vals) if vals else 0.0


def oracle_gsr(x, variant, sigma=0.5):
    n = len(x)
    ratios = [math.exp(oracle_split_ll(x, s, variant, sigma)) for s in range(1, n + 1)]
    return math.log(sum(ratios) / n)


def random_corpus(rng, count, max_n=30):
    corpus = []
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        corpus.append(rng.normal(0.3, 0.8, n))
        corpus.append((rng.random(n) < rng.uniform(0.05, 0.95)).astype(float))
    return corpus


# ---------------------------------------------------------------------------
# thresholds


def test_beta_threshold_frozen_values():
    # high-precision evaluations of the two forms at n=10, delta=0.01
    assert beta_threshold(10, 0.01, "theoretical") == pytest.approx(41.781589, abs=1e-5)
    assert beta_threshold(10, 0.01, "practical") == pytest.approx(9.445342, abs=1e-5)


def test_beta_threshold_monotone():
    for mode in ("theoretical", "practical"):
        for n in (1, 2, 10, 100, 5000):
            assert beta_threshold(n + 1, 0.01, mode) > beta_threshold(n, 0.01, mode)
            assert beta_threshold(n, 0.005, mode) > beta_threshold(n, 0.01, mode)


def test_beta_threshold_rejects_bad_args():
    with pytest.raises(ValueError):
        beta_threshold(0, 0.01)
    with pytest.raises(ValueError):
        beta_threshold(10, 0.0)
    with pytest.raises(ValueError):
        beta_threshold(10, 0.01, "loose")


# ---------------------------------------------------------------------------
# statistics


def test_glr_gaussian_frozen_example():
    # step of height 1 in the middle of six samples, sigma^2 = 0.25:
    # 3*3*1/(2*6*0.25) = 3.0 at the midpoint split
    g = glr_statistic(prefix_sums([0, 0, 0, 1, 1, 1]), variant="gaussian", sigma=0.5)
    assert g == pytest.approx(3.0, abs=1e-12)


def test_gsr_gaussian_frozen_example():
    w = gsr_statistic(prefix_sums([0, 1]), variant="gaussian", sigma=math.sqrt(0.5))
    assert w == pytest.approx(math.log((math.exp(0.5) + 1) / 2), abs=1e-12)


@pytest.mark.parametrize("variant", ["gaussian", "bernoulli"])
def test_constant_sequence_scores_zero(variant):
    x = np.full(40, 1.0 if variant == "bernoulli" else 0.37)
    p = prefix_sums(x)
    assert glr_statistic(p, variant=variant) == pytest.approx(0.0, abs=1e-10)
    assert gsr_statistic(p, variant=variant) == pytest.approx(0.0, abs=1e-10)


def test_short_buffers():
    assert glr_statistic(prefix_sums([0.4]), variant="gaussian") == 0.0
    assert glr_statistic(prefix_sums([]), variant="bernoulli") == 0.0
    assert gsr_statistic(prefix_sums([0.4]), variant="gaussian") == 0.0


def test_glr_matches_oracle_on_random_corpus():
    rng = np.random.default_rng(101)
    for x in random_corpus(rng, 100):
        binary = set(np.unique(x)) <= {0.0, 1.0}
        variant = "bernoulli" if binary else "gaussian"
        got = glr_statistic(prefix_sums(x), variant=variant, sigma=0.8)
        want = oracle_glr(x, variant, sigma=0.8)
        assert got == pytest.approx(want, abs=1e-9)


def test_gsr_matches_oracle_on_random_corpus():
    rng = np.random.default_rng(102)
    for x in random_corpus(rng, 100):
        binary = set(np.unique(x)) <= {0.0, 1.0}
        variant = "bernoulli" if binary else "gaussian"
        got = gsr_statistic(prefix_sums(x), variant=variant, sigma=0.8)
        want = oracle_gsr(x, variant, sigma=0.8)
        assert got == pytest.approx(want, abs=1e-9)


def test_gsr_sandwich_on_random_corpus():
    rng = np.random.default_rng(103)
    for x in random_corpus(rng, 100):
        for variant in ("gaussian", "bernoulli"):
            if variant == "bernoulli" and not set(np.unique(x)) <= {0.0, 1.0}:
                continue
            p = prefix_sums(x)
            g = glr_statistic(p, variant=variant, sigma=0.8, split_stride=1)
            w = gsr_statistic(p, variant=variant, sigma=0.8)
            n = len(x)
            assert g - math.log(n) - 1e-9 <= w <= g + 1e-9


@settings(max_examples=100)
@given(shift=st.floats(-5, 5), seed=st.integers(0, 10_000))
def test_gaussian_statistics_shift_invariant(shift, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, 25)
    base = glr_statistic(prefix_sums(x), variant="gaussian", sigma=0.7)
    moved = glr_statistic(prefix_sums(x + shift), variant="gaussian", sigma=0.7)
    assert moved == pytest.approx(base, abs=1e-8)


@settings(max_examples=100)
@given(scale=st.floats(0.1, 10), seed=st.integers(0, 10_000))
def test_gaussian_statistics_scale_invariant(scale, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, 25)
    base = glr_statistic(prefix_sums(x), variant="gaussian", sigma=0.7)
    scaled = glr_statistic(prefix_sums(x * scale), variant="gaussian", sigma=0.7 * scale)
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-9)


def test_split_stride_restricts_candidates():
    rng = np.random.default_rng(104)
    x = rng.normal(0, 1, 23)
    strided = glr_statistic(prefix_sums(x), variant="gaussian", split_stride=5)
    vals = []
    for s in (5, 10, 15, 20):
        pre, post = x[:s], x[s:]
        vals.append(s * (23 - s) * (pre.mean() - post.mean()) ** 2 / (2 * 23 * 0.5**2))
    assert strided == pytest.approx(max(vals), abs=1e-12)
    # stride too coarse for the buffer: no candidate splits at all
    assert glr_statistic(prefix_sums(x[:4]), variant="gaussian", split_stride=5) == 0.0


def test_prefix_statistic_matches_naive_recomputation():
    rng = np.random.default_rng(105)
    x = (rng.random(60) < 0.3).astype(float)
    det = ChangeDetector(DetectorConfig(kind="glr", variant="bernoulli",
                                        delta_f=0.5, test_stride=7, split_stride=3))
    for v in x:
        det.push(v)
    naive = glr_statistic(prefix_sums(x), variant="bernoulli", split_stride=3)
    assert det.statistic() == pytest.approx(naive, abs=1e-12)


# ---------------------------------------------------------------------------
# streaming behavior


def bern_stream(rng, means):
    return (rng.random(len(means)) < np.asarray(means)).astype(float)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(kind="cusum")
    with pytest.raises(ValueError):
        DetectorConfig(variant="poisson")
    with pytest.raises(ValueError):
        DetectorConfig(delta_f=1.5)
    with pytest.raises(ValueError):
        DetectorConfig(variant="gaussian", sigma=0.0)
    with pytest.raises(ValueError):
        DetectorConfig(test_stride=0)


def test_constant_stream_never_alarms():
    det = ChangeDetector(DetectorConfig(kind="glr", variant="bernoulli",
                                        threshold_mode="practical", delta_f=0.4))
    for _ in range(500):
        assert not det.push(1.0)
    assert not det.alarmed


def test_alarm_only_at_stride_multiples():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.01, test_stride=10, split_stride=5)
    rng = np.random.default_rng(106)
    means = np.concatenate([np.full(200, 0.1), np.full(400, 0.9)])
    det = ChangeDetector(cfg, trace=True)
    hit = det.push_many(bern_stream(rng, means))
    assert hit is not None and hit % 10 == 0
    assert all(n % 10 == 0 for n, *_ in det.trace)


def test_alarm_is_sticky_until_reset():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.01)
    rng = np.random.default_rng(107)
    det = ChangeDetector(cfg)
    means = np.concatenate([np.full(150, 0.1), np.full(300, 0.95)])
    assert det.push_many(bern_stream(rng, means)) is not None
    assert det.push(0.5)  # still alarmed
    det.reset()
    assert not det.alarmed and det.count == 0
    det.reset()  # idempotent
    assert not det.alarmed and det.count == 0


def test_push_many_equals_push_loop():
    cfg = DetectorConfig(kind="gsr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.05, test_stride=10)
    rng = np.random.default_rng(108)
    for trial in range(20):
        means = np.concatenate([np.full(100, 0.3), np.full(200, rng.uniform(0.3, 0.95))])
        xs = bern_stream(rng, means)
        a = ChangeDetector(cfg)
        hit = a.push_many(xs)
        b = ChangeDetector(cfg)
        loop_hit = None
        for i, v in enumerate(xs):
            if b.push(v):
                loop_hit = i + 1
                break
        assert hit == loop_hit
        assert a.count == b.count
        assert a.alarmed == b.alarmed
        if a.count:
            assert a.statistic() == pytest.approx(b.statistic(), abs=1e-12)


def test_detection_calibration_bernoulli_glr():
    # 0.5 -> 0.9 at position 500, practical threshold with delta_f = T^{-1/2}:
    # pilot-calibrated pass bar of >= 95% alarms within 300 post-change samples
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=5000 ** -0.5, test_stride=10, split_stride=5)
    rng = np.random.default_rng(109)
    means = np.concatenate([np.full(500, 0.5), np.full(300, 0.9)])
    alarms = 0
    for _ in range(300):
        det = ChangeDetector(cfg)
        if det.push_many(bern_stream(rng, means)) is not None:
            alarms += 1
    assert alarms / 300 >= 0.95


def test_false_alarm_rate_small_on_stationary():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="theoretical",
                         delta_f=0.05, test_stride=10, split_stride=5)
    rate = measure_false_alarm_rate(cfg, 1000, 200, np.random.default_rng(110))
    assert rate <= 0.05


def test_latency_profile_properties():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.02, test_stride=10, split_stride=5)
    prof_wide = measure_latency_profile(cfg, 0.4, 2000, 300, 0.05, 200,
                                        np.random.default_rng(111))
    prof_narrow = measure_latency_profile(cfg, 0.2, 2000, 300, 0.05, 200,
                                          np.random.default_rng(111))
    # latency decreasing in the change gap
    assert prof_wide.latency < prof_narrow.latency
    assert prof_wide.trials == 200
    # vacuous requirement
    prof_free = measure_latency_profile(cfg, 0.4, 2000, 300, 1.0, 50,
                                        np.random.default_rng(112))
    assert prof_free.latency == 0.0


def test_latency_profile_grows_slowly_in_horizon():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.02, test_stride=10, split_stride=5)
    d_small = measure_latency_profile(cfg, 0.3, 1000, 200, 0.05, 200,
                                      np.random.default_rng(113)).latency
    d_large = measure_latency_profile(cfg, 0.3, 10_000, 200, 0.05, 200,
                                      np.random.default_rng(113)).latency
    # logarithmic-growth regime: 10x horizon should cost far less than 10x latency
    assert d_large <= 3.0 * d_small + 50


def test_latency_profile_warns_on_low_resolution():
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.02)
    with pytest.warns(UserWarning, match="resolve"):
        measure_latency_profile(cfg, 0.4, 500, 100, 0.001, 20, np.random.default_rng(114))


def test_latency_profile_validates_args():
    cfg = DetectorConfig()
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        measure_latency_profile(cfg, 0.4, 100, 100, 0.1, 10, rng)
    with pytest.raises(ValueError):
        measure_latency_profile(cfg, 1.5, 1000, 100, 0.1, 10, rng)  # leaves [0,1]


def test_trace_csv_roundtrip(tmp_path):
    cfg = DetectorConfig(kind="glr", variant="bernoulli", threshold_mode="practical",
                         delta_f=0.01)
    rng = np.random.default_rng(115)
    det = ChangeDetector(cfg, trace=True)
    means = np.concatenate([np.full(100, 0.2), np.full(200, 0.9)])
    det.push_many(bern_stream(rng, means))
    path = tmp_path / "trace.csv"
    write_trace_csv(det.trace, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,statistic,threshold,alarm"
    assert len(lines) == len(det.trace) + 1
    assert lines[-1].endswith(",1")  # final row is the alarm
