"""Monte Carlo harness: seeding, parallel trials, and aggregation.

Algorithm combos are named by a compact label grammar:

    DAB:<B|G>-<GLR|GSR>+<policy>   detector-augmented run
    <policy>                       stationary baseline, detection disabled

where B/G selects the Bernoulli or Gaussian detector statistic and policy is
one of UCB, klUCB, MOSS (case-insensitive). Trial seeding is documented and
deterministic: trial j of combo i at grid cell x uses
numpy SeedSequence(base_seed, spawn_key=(i, x, j)), so any single trial can
be replayed in isolation and results never depend on worker count or
scheduling order. Aggregation reduces per-trial summaries in trial order.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .dab import DabConfig, run_episode
from .env import (
    ArmModel,
    GeometricEnvConfig,
    PiecewiseInstance,
    generate_geometric_instance,
)
from .policies import DISPLAY_NAMES, POLICY_NAMES

AGGREGATE_COLUMNS = ("combo", "detector", "policy", "xi", "T", "trials",
                     "mean_regret", "std_regret", "cp_mean", "detections_mean",
                     "true_det_mean", "false_alarm_mean", "mean_delay",
                     "missed_until_next_mean")

TRAJECTORY_COLUMNS = ("combo", "t", "mean_cum_regret")

_VARIANT_CODES = {"B": "bernoulli", "G": "gaussian"}
_VARIANT_LETTERS = {v: k for k, v in _VARIANT_CODES.items()}


@dataclass(frozen=True)
class ComboSpec:
    """Parsed combo label: which policy, and which detector if any."""

    policy: str
    detector: str = "none"
    variant: str = "bernoulli"

    @property
    def label(self) -> str:
        if self.detector == "none":
            return DISPLAY_NAMES[self.policy]
        return (f"DAB:{_VARIANT_LETTERS[self.variant]}-{self.detector.upper()}"
                f"+{DISPLAY_NAMES[self.policy]}")

    @property
    def detector_label(self) -> str:
        if self.detector == "none":
            return "none"
        return f"{_VARIANT_LETTERS[self.variant]}-{self.detector.upper()}"


def parse_combo(text: str) -> ComboSpec:
    """Parse a combo label; raises ValueError with the offending piece."""
    s = text.strip()
    if s.upper().startswith("DAB:"):
        head, sep, policy_part = s[4:].partition("+")
        if not sep:
            raise ValueError(f"combo {text!r} is missing '+<policy>'")
        variant_part, sep, kind_part = head.partition("-")
        if not sep or variant_part.upper() not in _VARIANT_CODES:
            raise ValueError(f"combo {text!r} needs a B- or G- detector prefix")
        kind = kind_part.lower()
        if kind not in ("glr", "gsr"):
            raise ValueError(f"combo {text!r} has unknown detector {kind_part!r}")
        policy = policy_part.strip().lower()
        if policy not in POLICY_NAMES:
            raise ValueError(f"combo {text!r} has unknown policy {policy_part!r}")
        return ComboSpec(policy=policy, detector=kind,
                         variant=_VARIANT_CODES[variant_part.upper()])
    policy = s.lower()
    if policy not in POLICY_NAMES:
        raise ValueError(f"unknown combo {text!r}")
    return ComboSpec(policy=policy)


# ---------------------------------------------------------------------------
# detection metrics

@dataclass(frozen=True)
class DetectionMetrics:
    """Classification of one trial's restarts against the true change-points.

    A restart at t is a true detection when at least one change-point lies in
    (t_prev, t] with t_prev the previous restart (0 before the first); its
    delay is t minus the most recent change-point <= t, and its covered count
    is how many change-points the window holds (>= 2 means earlier changes
    went undetected until this restart). Otherwise it is a false alarm.
    """

    detections: int
    true_detections: int
    false_alarms: int
    delays: tuple[int, ...]
    covered_counts: tuple[int, ...]


def classify_detections(change_points, restarts) -> DetectionMetrics:
    cps = [int(v) for v in change_points]
    prev = 0
    true_det = 0
    false_al = 0
    delays = []
    covered = []
    for t in restarts:
        t = int(t)
        hi = bisect_right(cps, t)
        lo = bisect_right(cps, prev)
        if hi > lo:
            true_det += 1
            delays.append(t - cps[hi - 1])
            covered.append(hi - lo)
        else:
            false_al += 1
        prev = t
    return DetectionMetrics(
        detections=len(restarts), true_detections=true_det,
        false_alarms=false_al, delays=tuple(delays),
        covered_counts=tuple(covered))


def dynamic_regret(arms, instance: PiecewiseInstance) -> float:
    """Regret of a pull sequence against the per-step oracle-best mean."""
    arms = np.asarray(arms)
    if arms.shape != (instance.horizon,):
        raise ValueError("need exactly one pull per step")
    k = instance.interval_indices(np.arange(1, instance.horizon + 1))
    best = instance.means.max(axis=1)
    return float(np.sum(best[k] - instance.means[k, arms]))


def grid_times(horizon: int, points: int) -> np.ndarray:
    """Evenly spaced 1-based step grid ending exactly at the horizon."""
    if points < 1:
        raise ValueError("need at least one grid point")
    raw = np.round(np.linspace(horizon / points, horizon, num=points))
    return np.unique(np.clip(raw, 1, horizon).astype(np.int64))


# ---------------------------------------------------------------------------
# plans

@dataclass(frozen=True)
class ExperimentPlan:
    """A full experiment: combo list x grid cells x independent trials."""

    combos: tuple[str, ...]
    num_arms: int = 5
    horizon: int = 20_000
    trials: int = 100
    xi: tuple[float, ...] = (0.5,)
    alpha0: float = 0.05
    gamma: float = 0.5
    threshold_mode: str = "practical"
    test_stride: int = 10
    split_stride: int = 5
    policy_sigma: float = 1.0
    detector_sigma: float = 0.5
    klucb_c: float = 3.0
    feed_policy_samples: bool = True
    reward_family: str = "bernoulli"
    reward_sigma: float = 0.5
    magnitude_range: tuple[float, float] = (0.1, 0.4)
    initial_mean_range: tuple[float, float] = (0.1, 0.9)
    base_seed: int = 0
    trajectory_points: int = 200
    fixed_instance: PiecewiseInstance | None = None

    def __post_init__(self):
        if not self.combos:
            raise ValueError("need at least one combo")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for combo in self.combos:
            parse_combo(combo)
        if self.fixed_instance is None and not self.xi:
            raise ValueError("need a xi grid or a fixed instance")
        if self.fixed_instance is not None:
            inst = self.fixed_instance
            if (inst.num_arms, inst.horizon) != (self.num_arms, self.horizon):
                raise ValueError("fixed instance disagrees with num_arms/horizon")
        # fail fast on bad generator / composer parameters
        if self.fixed_instance is None:
            for xi in self.xi:
                self.env_config(xi)
        else:
            self.arm_model()
        self.dab_config(parse_combo(self.combos[0]))
        grid_times(self.horizon, self.trajectory_points)

    def arm_model(self) -> ArmModel:
        if self.reward_family == "bernoulli":
            return ArmModel(family="bernoulli")
        return ArmModel(family=self.reward_family, sigma=self.reward_sigma)

    def env_config(self, xi: float) -> GeometricEnvConfig:
        return GeometricEnvConfig(
            num_arms=self.num_arms, horizon=self.horizon, xi=xi,
            magnitude_range=self.magnitude_range,
            initial_mean_range=self.initial_mean_range,
            arm_model=self.arm_model())

    def dab_config(self, combo: ComboSpec) -> DabConfig:
        return DabConfig(
            num_arms=self.num_arms, horizon=self.horizon, policy=combo.policy,
            detector=combo.detector, variant=combo.variant,
            alpha0=self.alpha0 if combo.detector != "none" else 0.0,
            gamma=self.gamma, threshold_mode=self.threshold_mode,
            test_stride=self.test_stride, split_stride=self.split_stride,
            policy_sigma=self.policy_sigma, detector_sigma=self.detector_sigma,
            klucb_c=self.klucb_c, feed_policy_samples=self.feed_policy_samples)

    @property
    def cell_keys(self) -> tuple[float | None, ...]:
        """Grid cells: xi values, or a single None cell in fixed-instance mode."""
        if self.fixed_instance is not None:
            return (None,)
        return self.xi


@dataclass(frozen=True)
class TrialSummary:
    final_regret: float
    trajectory: np.ndarray
    num_changes: int
    detections: int
    true_detections: int
    false_alarms: int
    delays: np.ndarray
    covered_counts: np.ndarray


def run_trial(plan: ExperimentPlan, combo_index: int, cell_index: int,
              trial: int) -> TrialSummary:
    """One independently seeded trial; the unit of parallel work."""
    combo = parse_combo(plan.combos[combo_index])
    seed = np.random.SeedSequence(plan.base_seed,
                                  spawn_key=(combo_index, cell_index, trial))
    rng = np.random.default_rng(seed)
    if plan.fixed_instance is not None:
        instance = plan.fixed_instance
    else:
        instance = generate_geometric_instance(
            plan.env_config(plan.xi[cell_index]), rng)
    result = run_episode(plan.dab_config(combo), instance, rng)
    metrics = classify_detections(instance.change_points, result.restarts)
    grid = grid_times(plan.horizon, plan.trajectory_points)
    return TrialSummary(
        final_regret=result.final_regret,
        trajectory=result.cum_regret[grid - 1],
        num_changes=instance.num_changes,
        detections=metrics.detections,
        true_detections=metrics.true_detections,
        false_alarms=metrics.false_alarms,
        delays=np.asarray(metrics.delays, dtype=np.int64),
        covered_counts=np.asarray(metrics.covered_counts, dtype=np.int64))


def _run_trial_star(args):
    return run_trial(*args)


# ---------------------------------------------------------------------------
# aggregation

@dataclass(frozen=True)
class AggregateRow:
    """One aggregate CSV row; xi is '<value>', 'pooled', or 'fixed'."""

    combo: str
    detector: str
    policy: str
    xi: str
    horizon: int
    trials: int
    mean_regret: float
    std_regret: float
    cp_mean: float
    detections_mean: float
    true_det_mean: float
    false_alarm_mean: float
    mean_delay: float
    missed_until_next_mean: float


@dataclass(frozen=True)
class TrajectoryCurve:
    combo: str
    xi: str
    grid: np.ndarray
    mean_cum_regret: np.ndarray


@dataclass(frozen=True)
class PlanResult:
    plan: ExperimentPlan
    rows: tuple[AggregateRow, ...]
    trajectories: tuple[TrajectoryCurve, ...]

    def row(self, combo: str, xi: str) -> AggregateRow:
        for r in self.rows:
            if r.combo == combo and r.xi == xi:
                return r
        raise KeyError((combo, xi))


def _xi_label(cell_key: float | None, plan: ExperimentPlan) -> str:
    if plan.fixed_instance is not None:
        return "fixed"
    return repr(float(cell_key))


def _aggregate(combo: ComboSpec, xi: str, horizon: int,
               summaries: list[TrialSummary]) -> AggregateRow:
    regrets = np.array([s.final_regret for s in summaries])
    delays = np.concatenate([s.delays for s in summaries]) if summaries else np.zeros(0)
    covered = np.concatenate([s.covered_counts for s in summaries])
    missed = covered[covered >= 2]
    return AggregateRow(
        combo=combo.label, detector=combo.detector_label,
        policy=DISPLAY_NAMES[combo.policy], xi=xi,
        horizon=horizon, trials=len(summaries),
        mean_regret=float(regrets.mean()),
        std_regret=float(regrets.std(ddof=0)),
        cp_mean=float(np.mean([s.num_changes for s in summaries])),
        detections_mean=float(np.mean([s.detections for s in summaries])),
        true_det_mean=float(np.mean([s.true_detections for s in summaries])),
        false_alarm_mean=float(np.mean([s.false_alarms for s in summaries])),
        mean_delay=float(delays.mean()) if delays.size else math.nan,
        missed_until_next_mean=float(missed.mean()) if missed.size else math.nan)


def run_plan(plan: ExperimentPlan, workers: int = 1) -> PlanResult:
    """Run every (combo, cell, trial) and aggregate in fixed trial order.

    Workers only change how trials are scheduled, never the numbers: each
    trial is seeded independently and reduction happens in task order.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    cells = plan.cell_keys
    tasks = [(plan, ci, xi_i, trial)
             for ci in range(len(plan.combos))
             for xi_i in range(len(cells))
             for trial in range(plan.trials)]
    if workers == 1:
        summaries = [run_trial(plan, ci, xi_i, trial)
                     for (_, ci, xi_i, trial) in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with get_context("fork").Pool(workers) as pool:
            summaries = pool.map(_run_trial_star, tasks, chunksize=chunk)

    grid = grid_times(plan.horizon, plan.trajectory_points)
    rows: list[AggregateRow] = []
    curves: list[TrajectoryCurve] = []
    per_trial = plan.trials
    per_combo = len(cells) * per_trial
    for ci, combo_label in enumerate(plan.combos):
        combo = parse_combo(combo_label)
        combo_summaries: list[TrialSummary] = []
        for xi_i, cell_key in enumerate(cells):
            start = ci * per_combo + xi_i * per_trial
            cell = summaries[start:start + per_trial]
            combo_summaries.extend(cell)
            xi = _xi_label(cell_key, plan)
            rows.append(_aggregate(combo, xi, plan.horizon, cell))
            curves.append(TrajectoryCurve(
                combo=combo.label, xi=xi, grid=grid,
                mean_cum_regret=np.mean(np.stack([s.trajectory for s in cell]),
                                        axis=0)))
        if len(cells) > 1:
            rows.append(_aggregate(combo, "pooled", plan.horizon, combo_summaries))
    return PlanResult(plan=plan, rows=tuple(rows), trajectories=tuple(curves))


# ---------------------------------------------------------------------------
# CSV output

def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def aggregate_csv_text(rows) -> str:
    lines = [",".join(AGGREGATE_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (
            r.combo, r.detector, r.policy, r.xi, r.horizon, r.trials,
            r.mean_regret, r.std_regret, r.cp_mean, r.detections_mean,
            r.true_det_mean, r.false_alarm_mean, r.mean_delay,
            r.missed_until_next_mean)))
    return "\n".join(lines) + "\n"


def trajectory_csv_text(curves) -> str:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for curve in curves:
        for t, value in zip(curve.grid, curve.mean_cum_regret):
            lines.append(f"{curve.combo},{t},{_fmt(float(value))}")
    return "\n".join(lines) + "\n"
