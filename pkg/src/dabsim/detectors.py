"""Streaming change detectors: GLR and GSR statistics with sample-count thresholds.

Both statistics compare a two-segment fit of the sample buffer against a
single-segment fit, with per-segment parameters profiled at the segment
empirical means. For a buffer of size n and a split s, the profiled
log-likelihood ratio is

    gaussian:  l_s = s (n - s) (mean_{1:s} - mean_{s+1:n})^2 / (2 n sigma^2)
    bernoulli: l_s = s kl(mean_{1:s}, mean_{1:n}) + (n - s) kl(mean_{s+1:n}, mean_{1:n})

with l_n = 0 (empty second segment). The Bernoulli form is computed as the
difference of segment log-likelihoods with the profiled means clamped to
[EPS, 1 - EPS] only inside the logarithms; away from degenerate (all-equal)
segments this is exactly the KL expression above, and on degenerate segments
it stays the exact likelihood ratio instead of inheriting an O(EPS ln EPS)
clamping artifact. The GLR statistic is G_n = max_s l_s over
candidate splits; the GSR statistic averages likelihood ratios instead and is
kept in log space, log W_n = logsumexp_s(l_s) - ln n over the full split set.

A GLR detector alarms when G_n >= beta(n, delta_f); a GSR detector alarms
when log W_n >= beta(n, delta_f) + ln n. Evaluation happens every
``test_stride`` samples, and GLR additionally restricts candidate splits to
multiples of ``split_stride``; the GSR average always runs over all splits.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .kl import EPS

KINDS = ("glr", "gsr")
VARIANTS = ("gaussian", "bernoulli")
THRESHOLD_MODES = ("theoretical", "practical")


@dataclass(frozen=True)
class DetectorConfig:
    """Static parameters of one detector instance."""

    kind: str = "glr"
    variant: str = "bernoulli"
    sigma: float = 0.5
    threshold_mode: str = "practical"
    delta_f: float = 0.01
    test_stride: int = 10
    split_stride: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if not 0.0 < self.delta_f < 1.0:
            raise ValueError("delta_f must lie in (0, 1)")
        if self.variant == "gaussian" and self.sigma <= 0.0:
            raise ValueError("gaussian variant needs sigma > 0")
        if self.test_stride < 1 or self.split_stride < 1:
            raise ValueError("strides must be >= 1")


def prefix_sums(samples) -> np.ndarray:
    """Prefix-sum array with a leading 0, as the statistic functions expect."""
    x = np.asarray(samples, dtype=np.float64)
    out = np.zeros(x.size + 1)
    np.cumsum(x, out=out[1:])
    return out


def beta_threshold(n: int, delta_f: float, mode: str = "theoretical") -> float:
    """Alarm threshold as a function of the buffer size.

    The theoretical form 6 ln(1 + ln n) + (5/2) ln(4 n^{3/2} / delta_f) + 11
    controls the false-alarm probability but is conservative; the practical
    form keeps only ln(4 n^{3/2} / delta_f).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < delta_f < 1.0:
        raise ValueError("delta_f must lie in (0, 1)")
    core = math.log(4.0 * n ** 1.5 / delta_f)
    if mode == "practical":
        return core
    if mode == "theoretical":
        return 6.0 * math.log1p(math.log(n)) + 2.5 * core + 11.0
    raise ValueError(f"unknown threshold mode {mode!r}")


def _clamp(x):
    return np.clip(x, EPS, 1.0 - EPS)


def _split_values(prefix, n, splits, variant, sigma):
    """Profiled log-likelihood ratios l_s for each split in ``splits`` (all < n)."""
    s = splits.astype(np.float64)
    total = prefix[n]
    left = prefix[splits]
    right = total - left
    if variant == "gaussian":
        mean1 = left / s
        mean2 = right / (n - s)
        return s * (n - s) * (mean1 - mean2) ** 2 / (2.0 * n * sigma * sigma)
    p1 = _clamp(left / s)
    p2 = _clamp(right / (n - s))
    q = _clamp(np.float64(total / n))
    num = (left * np.log(p1) + (s - left) * np.log1p(-p1)
           + right * np.log(p2) + (n - s - right) * np.log1p(-p2))
    den = total * math.log(q) + (n - total) * math.log1p(-q)
    return num - den


def glr_statistic(prefix, n: int | None = None, *, variant: str = "gaussian",
                  sigma: float = 0.5, split_stride: int = 1) -> float:
    """G_n = max over candidate splits of the profiled log-likelihood ratio.

    ``prefix`` is a prefix-sum array with prefix[0] = 0 covering at least n
    samples. Candidate splits are the multiples of ``split_stride`` in
    [1, n-1]; with no candidates (n < 2, or stride too coarse) the statistic
    is 0. Always >= 0.
    """
    if n is None:
        n = len(prefix) - 1
    if n < 2:
        return 0.0
    splits = np.arange(split_stride, n, split_stride)
    if splits.size == 0:
        return 0.0
    # the exact maximum is >= 0 (the two-segment fit dominates); max(0, .)
    # only strips float dust on near-constant buffers
    return max(0.0, float(np.max(_split_values(prefix, n, splits, variant, sigma))))


def gsr_statistic(prefix, n: int | None = None, *, variant: str = "gaussian",
                  sigma: float = 0.5) -> float:
    """log W_n = logsumexp of l_s over the full split set {1..n}, minus ln n."""
    if n is None:
        n = len(prefix) - 1
    if n < 1:
        return 0.0
    values = np.zeros(n)  # l_n = 0
    if n >= 2:
        splits = np.arange(1, n)
        values[:-1] = _split_values(prefix, n, splits, variant, sigma)
    return float(logsumexp(values) - math.log(n))


class ChangeDetector:
    """One arm's streaming detector.

    ``push`` appends a sample and returns the alarm flag; the statistic is
    evaluated only when the buffer size is a multiple of the test stride.
    Once alarmed the detector stays alarmed until ``reset``. With
    ``trace=True`` every evaluation is recorded as a (n, statistic,
    threshold, alarm) row; the trace survives resets so a full stream can be
    exported for debugging.
    """

    def __init__(self, config: DetectorConfig, trace: bool = False):
        self.config = config
        self.trace = [] if trace else None
        self._prefix = np.zeros(64)
        self._prefix_sq = np.zeros(64)  # diagnostic state, unused by the statistics
        self._n = 0
        self._alarmed = False

    @property
    def count(self) -> int:
        return self._n

    @property
    def alarmed(self) -> bool:
        return self._alarmed

    def reset(self):
        self._n = 0
        self._alarmed = False

    def _grow(self, needed):
        cap = len(self._prefix)
        if needed >= cap:
            new_cap = max(needed + 1, 2 * cap)
            for name in ("_prefix", "_prefix_sq"):
                old = getattr(self, name)
                fresh = np.zeros(new_cap)
                fresh[: self._n + 1] = old[: self._n + 1]
                setattr(self, name, fresh)

    def push(self, x: float) -> bool:
        if self._alarmed:
            return True
        n = self._n
        self._grow(n + 1)
        self._prefix[n + 1] = self._prefix[n] + x
        self._prefix_sq[n + 1] = self._prefix_sq[n] + x * x
        self._n = n + 1
        if self._n % self.config.test_stride == 0:
            self._evaluate()
        return self._alarmed

    def push_many(self, xs) -> int | None:
        """Feed samples until an alarm fires.

        Returns the buffer size at which the alarm fired, or None if the
        whole array was consumed quietly. The post-call state is identical to
        a push loop that stops on the first alarm.
        """
        if self._alarmed:
            return self._n
        xs = np.asarray(xs, dtype=np.float64)
        n0 = self._n
        n1 = n0 + xs.size
        self._grow(n1)
        np.cumsum(xs, out=self._prefix[n0 + 1 : n1 + 1])
        self._prefix[n0 + 1 : n1 + 1] += self._prefix[n0]
        np.cumsum(xs * xs, out=self._prefix_sq[n0 + 1 : n1 + 1])
        self._prefix_sq[n0 + 1 : n1 + 1] += self._prefix_sq[n0]
        stride = self.config.test_stride
        first = (n0 // stride + 1) * stride
        for m in range(first, n1 + 1, stride):
            self._n = m
            self._evaluate()
            if self._alarmed:
                return m
        self._n = n1
        return None

    def statistic(self) -> float:
        """Current statistic value, regardless of the test stride."""
        cfg = self.config
        if cfg.kind == "glr":
            return glr_statistic(self._prefix, self._n, variant=cfg.variant,
                                 sigma=cfg.sigma, split_stride=cfg.split_stride)
        return gsr_statistic(self._prefix, self._n, variant=cfg.variant, sigma=cfg.sigma)

    def _evaluate(self):
        cfg = self.config
        stat = self.statistic()
        level = beta_threshold(self._n, cfg.delta_f, cfg.threshold_mode)
        if cfg.kind == "gsr":
            level += math.log(self._n)
        alarm = stat >= level
        if alarm:
            self._alarmed = True
        if self.trace is not None:
            self.trace.append((self._n, stat, level, alarm))


def write_trace_csv(rows, path):
    """Write (n, statistic, threshold, alarm) trace rows as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "statistic", "threshold", "alarm"])
        for n, stat, level, alarm in rows:
            writer.writerow([n, repr(stat), repr(level), int(alarm)])


@dataclass
class LatencyProfile:
    """Result of a detection-latency Monte Carlo run."""

    latency: float
    delays: np.ndarray
    alarm_before_change_fraction: float
    trials: int


def _stream(rng, variant, means, sigma):
    if variant == "bernoulli":
        return (rng.random(means.size) < means).astype(np.float64)
    return rng.normal(means, sigma)


def measure_latency_profile(config: DetectorConfig, change_gap: float, horizon: int,
                            pre_window: int, delta_d: float, trials: int,
                            rng: np.random.Generator,
                            base_mean: float | None = None) -> LatencyProfile:
    """Monte Carlo estimate of the detection latency at a given change gap.

    Each trial draws a change position c uniformly from {pre_window+1, ...,
    horizon-1}, streams samples with mean base_mean - gap/2 up to c and
    base_mean + gap/2 after, and records the alarm time tau. The returned
    latency is the smallest t with P(tau >= c + t) <= delta_d, the
    probability estimated over the trials whose placement leaves room
    (c <= horizon - t); this pools placements rather than taking the worst
    case, which is the tractable Monte Carlo reading of the latency
    definition. delta_d = 1 gives latency 0 by construction.
    """
    if not 0 < pre_window < horizon:
        raise ValueError("need 0 < pre_window < horizon")
    if not 0.0 < delta_d <= 1.0:
        raise ValueError("delta_d must lie in (0, 1]")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trials * delta_d < 1.0:
        warnings.warn(
            f"{trials} trials cannot resolve delta_d={delta_d}; "
            "the latency estimate will saturate", stacklevel=2)
    if base_mean is None:
        base_mean = 0.5 if config.variant == "bernoulli" else 0.0
    mu0 = base_mean - change_gap / 2.0
    mu1 = base_mean + change_gap / 2.0
    if config.variant == "bernoulli" and not (0.0 <= mu0 and mu1 <= 1.0):
        raise ValueError("change gap leaves the Bernoulli mean range [0, 1]")

    placements = rng.integers(pre_window + 1, horizon, size=trials)
    taus = np.empty(trials)
    for i in range(trials):
        c = placements[i]
        means = np.full(horizon, mu0)
        means[c:] = mu1  # sample index c is the first post-change draw (t = c+1)
        det = ChangeDetector(config)
        hit = det.push_many(_stream(rng, config.variant, means, config.sigma))
        taus[i] = math.inf if hit is None else hit

    delays = taus - placements
    latency = math.inf
    for t in range(horizon + 1):
        usable = placements <= horizon - t
        if not usable.any():
            break
        if np.mean(taus[usable] >= placements[usable] + t) <= delta_d:
            latency = float(t)
            break
    if math.isinf(latency):
        warnings.warn("latency did not resolve within the horizon", stacklevel=2)
    return LatencyProfile(
        latency=latency,
        delays=delays,
        alarm_before_change_fraction=float(np.mean(taus <= placements)),
        trials=trials,
    )


def measure_false_alarm_rate(config: DetectorConfig, horizon: int, trials: int,
                             rng: np.random.Generator,
                             mean: float | None = None) -> float:
    """Fraction of stationary streams of the given length that trigger an alarm."""
    if mean is None:
        mean = 0.5 if config.variant == "bernoulli" else 0.0
    means = np.full(horizon, mean)
    alarms = 0
    for _ in range(trials):
        det = ChangeDetector(config)
        if det.push_many(_stream(rng, config.variant, means, config.sigma)) is not None:
            alarms += 1
    return alarms / trials
