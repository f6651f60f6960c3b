"""Detection-augmented bandit: a stationary policy wrapped with per-arm
change detectors, forced exploration, and global restarts.

Each step t (1-based) first checks the forced-exploration schedule: with
r = ((t - tau - 1) mod P_k) + 1, steps where r <= A round-robin through the
arms and bypass the policy entirely; forced rewards never enter the policy's
history. All other steps play the policy's selection and update it. The
pulled arm's detector receives the reward (always for forced pulls, and for
policy pulls unless feed_policy_samples is off) and is the only detector
tested that step. An alarm sets tau to the current step, resets the policy
and every detector, bumps the restart counter k, and recomputes the forcing
period P_k = ceil(A / alpha_k) with alpha_k = alpha0 sqrt(k A ln(T) / T);
the alarming reward is not replayed into any fresh history.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .detectors import (
    KINDS,
    THRESHOLD_MODES,
    VARIANTS,
    ChangeDetector,
    DetectorConfig,
)
from .env import PiecewiseInstance, compute_gaps
from .policies import POLICY_NAMES, StationaryPolicy, make_policy

DETECTOR_CHOICES = KINDS + ("none",)

# Scale constants of the default latency model used by the separation
# diagnostic: detection needs about scale * sigma^2 / gap^2 * log-budget
# samples post-change, and a pre-change window of the same order. Calibrated
# against measure_latency_profile pilots (Bernoulli GLR, practical threshold,
# gaps 0.2-0.4: empirical/model ratios 2.8-3.4, window needs ~2 units), with
# margin. Diagnostics only; the online algorithm never reads them.
DEFAULT_LATENCY_SCALE = 4.0
DEFAULT_WINDOW_SCALE = 4.0


@dataclass(frozen=True)
class DabConfig:
    """Everything one trial needs besides the instance and the seed."""

    num_arms: int
    horizon: int
    policy: str = "klucb"
    detector: str = "glr"
    variant: str = "bernoulli"
    alpha0: float = 0.05
    gamma: float = 0.5
    threshold_mode: str = "practical"
    test_stride: int = 10
    split_stride: int = 5
    policy_sigma: float = 1.0
    detector_sigma: float = 0.5
    klucb_c: float = 3.0
    feed_policy_samples: bool = True

    def __post_init__(self):
        if self.num_arms < 2:
            raise ValueError("need at least 2 arms")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.policy.lower() not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.detector not in DETECTOR_CHOICES:
            raise ValueError(f"detector must be one of {DETECTOR_CHOICES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.alpha0 < 0.0:
            raise ValueError("alpha0 must be >= 0")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")

    @property
    def delta(self) -> float:
        """Shared failure budget T^(-gamma) for thresholds and latency targets."""
        return float(self.horizon) ** (-self.gamma)

    def detector_config(self) -> DetectorConfig | None:
        if self.detector == "none":
            return None
        return DetectorConfig(
            kind=self.detector,
            variant=self.variant,
            sigma=self.detector_sigma,
            threshold_mode=self.threshold_mode,
            delta_f=self.delta,
            test_stride=self.test_stride,
            split_stride=self.split_stride,
        )

    def make_policy(self) -> StationaryPolicy:
        return make_policy(self.policy, self.num_arms, self.horizon,
                           sigma=self.policy_sigma, klucb_c=self.klucb_c)

    def exploration_rate(self, k: int) -> float:
        """alpha_k = alpha0 sqrt(k A ln(T) / T) for the k-th restart epoch."""
        if k < 1:
            raise ValueError("k must be >= 1")
        return self.alpha0 * math.sqrt(
            k * self.num_arms * math.log(self.horizon) / self.horizon)

    def exploration_period(self, k: int) -> int | None:
        """Forcing period P_k = ceil(A / alpha_k); None disables forcing."""
        if self.alpha0 == 0.0:
            return None
        alpha = self.exploration_rate(k)
        if alpha >= 1.0:
            warnings.warn(
                f"exploration rate alpha_{k} = {alpha:.3g} >= 1; "
                "falling back to pure round-robin", stacklevel=2)
            return self.num_arms
        return math.ceil(self.num_arms / alpha)


class StepOutcome(NamedTuple):
    arm: int
    reward: float
    forced: bool
    restarted: bool


class DabAgent:
    """Online state of one trial: policy, detectors, and the restart clock."""

    def __init__(self, config: DabConfig):
        self.config = config
        self.policy = config.make_policy()
        det_cfg = config.detector_config()
        self.detectors = (None if det_cfg is None else
                          [ChangeDetector(det_cfg) for _ in range(config.num_arms)])
        self.tau = 0
        self.k = 1
        self.period = config.exploration_period(1)
        self.restarts: list[int] = []

    def forced_arm(self, t: int) -> int | None:
        """Arm forced at step t, or None when the policy chooses."""
        if self.period is None:
            return None
        r = (t - self.tau - 1) % self.period + 1
        return r - 1 if r <= self.config.num_arms else None

    def step(self, t: int, reward_for: Callable[[int], float]) -> StepOutcome:
        forced = self.forced_arm(t)
        arm = forced if forced is not None else self.policy.select()
        reward = reward_for(arm)
        if forced is None:
            self.policy.update(arm, reward)
        restarted = False
        if self.detectors is not None and (
                forced is not None or self.config.feed_policy_samples):
            if self.detectors[arm].push(reward):
                self.restart(t)
                restarted = True
        return StepOutcome(arm, reward, forced is not None, restarted)

    def restart(self, t: int) -> None:
        self.tau = t
        self.k += 1
        self.period = self.config.exploration_period(self.k)
        self.policy.reset()
        if self.detectors is not None:
            for det in self.detectors:
                det.reset()
        self.restarts.append(t)


@dataclass
class TrialRecord:
    """Per-step trajectory of one episode, 1-based step t = index + 1."""

    arms: np.ndarray
    forced: np.ndarray
    rewards: np.ndarray
    instant_regret: np.ndarray
    restarts: list[int]

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.instant_regret)


@dataclass
class EpisodeResult:
    cum_regret: np.ndarray
    restarts: list[int]
    forced_steps: int
    record: TrialRecord | None = None

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


def run_episode(config: DabConfig, instance: PiecewiseInstance,
                rng: np.random.Generator, *, record: bool = False) -> EpisodeResult:
    """One full trial; deterministic given (config, instance, rng state)."""
    if (config.num_arms, config.horizon) != (instance.num_arms, instance.horizon):
        raise ValueError("config and instance disagree on num_arms or horizon")

    agent = DabAgent(config)
    horizon = config.horizon
    means = instance.means
    best = means.max(axis=1)
    change_points = instance.change_points
    bernoulli = instance.arm_model.family == "bernoulli"
    reward_sigma = instance.arm_model.sigma

    instant = np.empty(horizon)
    arms = np.empty(horizon, dtype=np.int32) if record else None
    forced_flags = np.zeros(horizon, dtype=bool) if record else None
    rewards = np.empty(horizon) if record else None

    interval = 0
    next_cp_idx = 0
    forced_steps = 0
    for t in range(1, horizon + 1):
        if next_cp_idx < change_points.size and t == change_points[next_cp_idx]:
            interval += 1
            next_cp_idx += 1
        row = means[interval]

        if bernoulli:
            outcome = agent.step(t, lambda a: float(rng.random() < row[a]))
        else:
            outcome = agent.step(t, lambda a: float(rng.normal(row[a], reward_sigma)))

        instant[t - 1] = best[interval] - row[outcome.arm]
        if outcome.forced:
            forced_steps += 1
        if record:
            arms[t - 1] = outcome.arm
            forced_flags[t - 1] = outcome.forced
            rewards[t - 1] = outcome.reward

    trial_record = None
    if record:
        trial_record = TrialRecord(arms=arms, forced=forced_flags, rewards=rewards,
                                   instant_regret=instant, restarts=list(agent.restarts))
    return EpisodeResult(cum_regret=np.cumsum(instant), restarts=list(agent.restarts),
                         forced_steps=forced_steps, record=trial_record)


def write_trial_csv(record: TrialRecord, path) -> None:
    """Step-level CSV: t, arm, forced, reward, instant and cumulative regret,
    and whether a restart fired at that step."""
    restart_steps = set(record.restarts)
    cum = record.cum_regret
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,arm,forced,reward,instant_regret,cum_regret,restart\n")
        for i in range(record.arms.size):
            fh.write(f"{i + 1},{record.arms[i]},{int(record.forced[i])},"
                     f"{float(record.rewards[i])!r},{float(record.instant_regret[i])!r},"
                     f"{float(cum[i])!r},{int(i + 1 in restart_steps)}\n")


# ---------------------------------------------------------------------------
# separation diagnostic: is every stationary interval long enough for the
# detector to settle (pre-change window) plus the previous change's delay?

def default_detection_samples(gap: float, horizon: int, *, sigma: float = 0.5,
                              delta_f: float | None = None,
                              delta_d: float | None = None,
                              scale: float = DEFAULT_LATENCY_SCALE) -> int:
    """Post-change samples a detector needs for a mean shift of `gap`."""
    if gap <= 0 or not math.isfinite(gap):
        return 0 if gap > 0 else int(1e18)
    delta_f = horizon ** -0.5 if delta_f is None else delta_f
    delta_d = delta_f if delta_d is None else delta_d
    budget = math.log(4.0 * horizon ** 1.5 / delta_f) + math.log(1.0 / delta_d)
    return math.ceil(scale * sigma ** 2 / gap ** 2 * budget)


@dataclass(frozen=True)
class SeparationReport:
    """Per-change-point verdicts of the interval-length condition."""

    change_points: np.ndarray
    required: np.ndarray
    available: np.ndarray
    satisfied: np.ndarray
    window_samples: int
    delay_samples: int

    @property
    def fraction_satisfied(self) -> float:
        return float(self.satisfied.mean()) if self.satisfied.size else 1.0

    @property
    def all_satisfied(self) -> bool:
        return bool(self.satisfied.all()) if self.satisfied.size else True


def check_separation_condition(
        instance: PiecewiseInstance, config: DabConfig,
        window_fn: Callable[[float, int], int] | None = None,
        delay_fn: Callable[[float, int], int] | None = None) -> SeparationReport:
    """Check, per change-point k, that the interval before it is long enough.

    With the global minimum change gap as the design gap, the k-th interval
    needs delay_{k-1} + window_k steps, each scaled by the forcing period
    ceil(A / alpha_k) because only every P_k-th step feeds a given arm's
    detector under forced exploration alone. The first interval carries no
    inherited delay. Diagnostic only; the online algorithm never reads it.
    """
    gaps = compute_gaps(instance)
    horizon = config.horizon
    if delay_fn is None:
        def delay_fn(gap, horizon_):
            return default_detection_samples(
                gap, horizon_, sigma=config.detector_sigma,
                delta_f=config.delta, delta_d=config.delta)
    if window_fn is None:
        def window_fn(gap, horizon_):
            return math.ceil(DEFAULT_WINDOW_SCALE / DEFAULT_LATENCY_SCALE
                             * delay_fn(gap, horizon_))

    num_changes = instance.num_changes
    window = int(window_fn(gaps.min_change_gap, horizon)) if num_changes else 0
    delay = int(delay_fn(gaps.min_change_gap, horizon)) if num_changes else 0

    def scaled(period: int | None, samples: int) -> float:
        if samples == 0:
            return 0.0
        return math.inf if period is None else float(period) * samples

    starts = np.concatenate(([1], instance.change_points))
    available = np.diff(starts).astype(np.float64)
    required = np.empty(num_changes)
    for k in range(1, num_changes + 1):
        prev_delay = 0.0 if k == 1 else scaled(config.exploration_period(k - 1), delay)
        required[k - 1] = prev_delay + scaled(config.exploration_period(k), window)
    satisfied = required <= available
    return SeparationReport(
        change_points=instance.change_points.copy(),
        required=required,
        available=available,
        satisfied=satisfied,
        window_samples=window,
        delay_samples=delay,
    )
