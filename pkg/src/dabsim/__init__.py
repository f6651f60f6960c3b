"""Piecewise-stationary bandit simulations.

Stationary index policies (UCB, klUCB, MOSS), sequential change detectors
(GLR and its split-free variant, in Gaussian and Bernoulli forms), the
detect-and-restart composition that pairs them with forced exploration, and
a Monte Carlo harness that measures dynamic regret and detection quality on
randomly generated piecewise-constant instances.
"""

from __future__ import annotations

from .dab import (
    DabAgent,
    DabConfig,
    EpisodeResult,
    SeparationReport,
    TrialRecord,
    check_separation_condition,
    default_detection_samples,
    run_episode,
    write_trial_csv,
)
from .detectors import (
    ChangeDetector,
    DetectorConfig,
    LatencyProfile,
    beta_threshold,
    glr_statistic,
    gsr_statistic,
    measure_false_alarm_rate,
    measure_latency_profile,
)
from .env import (
    ArmModel,
    GapSummary,
    GeometricEnvConfig,
    PiecewiseInstance,
    compute_gaps,
    generate_geometric_instance,
    load_instance,
    save_instance,
)
from .harness import (
    AggregateRow,
    ComboSpec,
    DetectionMetrics,
    ExperimentPlan,
    PlanResult,
    TrajectoryCurve,
    aggregate_csv_text,
    classify_detections,
    dynamic_regret,
    parse_combo,
    run_plan,
    trajectory_csv_text,
)
from .kl import bernoulli_kl, klucb_bound, klucb_bounds
from .policies import (
    KlUcbPolicy,
    MossPolicy,
    StationaryPolicy,
    UcbPolicy,
    make_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "AggregateRow",
    "ChangeDetector",
    "ComboSpec",
    "DabAgent",
    "DabConfig",
    "DetectionMetrics",
    "DetectorConfig",
    "EpisodeResult",
    "ExperimentPlan",
    "GapSummary",
    "GeometricEnvConfig",
    "KlUcbPolicy",
    "LatencyProfile",
    "MossPolicy",
    "PiecewiseInstance",
    "PlanResult",
    "SeparationReport",
    "StationaryPolicy",
    "TrajectoryCurve",
    "TrialRecord",
    "UcbPolicy",
    "aggregate_csv_text",
    "bernoulli_kl",
    "beta_threshold",
    "check_separation_condition",
    "classify_detections",
    "compute_gaps",
    "default_detection_samples",
    "dynamic_regret",
    "generate_geometric_instance",
    "glr_statistic",
    "gsr_statistic",
    "klucb_bound",
    "klucb_bounds",
    "load_instance",
    "make_policy",
    "measure_false_alarm_rate",
    "measure_latency_profile",
    "parse_combo",
    "run_episode",
    "run_plan",
    "save_instance",
    "trajectory_csv_text",
    "write_trial_csv",
    "__version__",
]
