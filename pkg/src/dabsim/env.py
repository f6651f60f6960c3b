"""Piecewise-stationary bandit environments.

An instance is a mean matrix over stationary intervals plus the change-points
where a new interval begins. Time steps are 1-based: t runs over {1, ..., T},
change-point nu_k is the first step of interval k+1, and interval k (0-based)
covers nu_k <= t < nu_{k+1} with the sentinels nu_0 = 1 and
nu_{K} = T + 1.

Random instances follow a geometric spacing model: interval lengths are
i.i.d. Geometric(rho) with rho = T^(-xi), so the expected number of
change-points over the horizon is T^(1-xi). At each change-point exactly one
uniformly chosen arm shifts by a Uniform(magnitude_range) amount with a
uniform sign, reflected at the [0, 1] boundary for Bernoulli rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("bernoulli", "gaussian")

BERNOULLI_SIGMA = 0.5  # sub-Gaussian scale of any [0, 1]-valued reward


@dataclass(frozen=True)
class ArmModel:
    """Reward family and its sub-Gaussian scale."""

    family: str = "bernoulli"
    sigma: float = BERNOULLI_SIGMA

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown reward family {self.family!r}")
        if self.family == "bernoulli" and self.sigma != BERNOULLI_SIGMA:
            raise ValueError("bernoulli rewards have sigma fixed at 1/2")
        if self.family == "gaussian" and self.sigma <= 0.0:
            raise ValueError("gaussian rewards need sigma > 0")


@dataclass(frozen=True, eq=False)
class PiecewiseInstance:
    """Ground-truth environment: per-interval means and the change-points.

    ``means`` has one row per stationary interval and one column per arm;
    ``change_points`` holds the first step of every interval after the first,
    each in {2, ..., T}, strictly increasing. Immutable after construction
    and safe to share across trial workers.
    """

    num_arms: int
    horizon: int
    change_points: np.ndarray
    means: np.ndarray
    arm_model: ArmModel = field(default_factory=ArmModel)

    def __post_init__(self):
        cps = np.asarray(self.change_points, dtype=np.int64)
        means = np.asarray(self.means, dtype=np.float64)
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "means", means)
        if self.num_arms < 2:
            raise ValueError("need at least 2 arms")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if cps.ndim != 1:
            raise ValueError("change_points must be one-dimensional")
        if cps.size and (np.any(np.diff(cps) <= 0) or cps[0] < 2 or cps[-1] > self.horizon):
            raise ValueError("change_points must be strictly increasing within [2, T]")
        if means.shape != (cps.size + 1, self.num_arms):
            raise ValueError(
                f"means must have shape (num_intervals, num_arms) = "
                f"({cps.size + 1}, {self.num_arms}), got {means.shape}")
        if cps.size and not np.all(np.abs(np.diff(means, axis=0)).max(axis=1) > 0):
            raise ValueError("every change-point must change at least one arm's mean")
        if self.arm_model.family == "bernoulli" and (means.min() < 0 or means.max() > 1):
            raise ValueError("bernoulli means must lie in [0, 1]")
        object.__setattr__(self, "_best", means.max(axis=1))

    @property
    def num_changes(self) -> int:
        return self.change_points.size

    @property
    def num_intervals(self) -> int:
        return self.change_points.size + 1

    def interval_index(self, t: int) -> int:
        """0-based index of the stationary interval containing step t."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"t must lie in [1, {self.horizon}]")
        return int(np.searchsorted(self.change_points, t, side="right"))

    def interval_indices(self, ts) -> np.ndarray:
        """Vectorized interval_index without bounds checks."""
        return np.searchsorted(self.change_points, ts, side="right")

    def mean(self, arm: int, t: int) -> float:
        return float(self.means[self.interval_index(t), arm])

    def best_mean(self, t: int) -> float:
        return float(self._best[self.interval_index(t)])


def oracle_best_mean(instance: PiecewiseInstance, t: int) -> float:
    """max over arms of the true mean at step t."""
    return instance.best_mean(t)


def sample_reward(instance: PiecewiseInstance, arm: int, t: int,
                  rng: np.random.Generator) -> float:
    """One reward draw for the given arm at step t."""
    if not 0 <= arm < instance.num_arms:
        raise ValueError(f"arm must lie in [0, {instance.num_arms})")
    mu = instance.mean(arm, t)
    if instance.arm_model.family == "bernoulli":
        return float(rng.random() < mu)
    return float(rng.normal(mu, instance.arm_model.sigma))


@dataclass(frozen=True)
class GapSummary:
    """Suboptimality and change gaps of one instance.

    ``subopt_gaps[k, a]`` is the deficit of arm a in interval k;
    ``change_gaps[k]`` is the largest per-arm mean shift across change-point
    k+1. On an instance without change-points the minima over the empty sets
    (min_change_gap, min_separation) are +inf.
    """

    subopt_gaps: np.ndarray
    change_gaps: np.ndarray
    min_change_gap: float
    max_subopt_gap: float
    min_separation: float


def compute_gaps(instance: PiecewiseInstance) -> GapSummary:
    means = instance.means
    subopt = means.max(axis=1, keepdims=True) - means
    if instance.num_changes:
        change_gaps = np.abs(np.diff(means, axis=0)).max(axis=1)
        starts = np.concatenate(([1], instance.change_points))
        min_separation = float(np.diff(starts).min())
        min_change_gap = float(change_gaps.min())
    else:
        change_gaps = np.zeros(0)
        min_separation = np.inf
        min_change_gap = np.inf
    return GapSummary(
        subopt_gaps=subopt,
        change_gaps=change_gaps,
        min_change_gap=min_change_gap,
        max_subopt_gap=float(subopt.max()),
        min_separation=min_separation,
    )


@dataclass(frozen=True)
class GeometricEnvConfig:
    """Parameters of the geometric-spacing instance generator."""

    num_arms: int = 5
    horizon: int = 100_000
    xi: float = 0.5
    magnitude_range: tuple[float, float] = (0.1, 0.4)
    initial_mean_range: tuple[float, float] = (0.1, 0.9)
    arm_model: ArmModel = field(default_factory=ArmModel)

    def __post_init__(self):
        if self.num_arms < 2 or self.horizon < 1:
            raise ValueError("need num_arms >= 2 and horizon >= 1")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie in (0, 1)")
        lo, hi = self.magnitude_range
        if not 0.0 < lo <= hi:
            raise ValueError("magnitude range must satisfy 0 < lo <= hi")
        ilo, ihi = self.initial_mean_range
        if ilo > ihi:
            raise ValueError("initial mean range must satisfy lo <= hi")
        if self.arm_model.family == "bernoulli":
            if ilo < 0.0 or ihi > 1.0:
                raise ValueError("bernoulli initial means must stay in [0, 1]")
            if hi > 1.0:
                raise ValueError("bernoulli change magnitudes above 1 cannot reflect into [0, 1]")

    @property
    def change_probability(self) -> float:
        return float(self.horizon) ** (-self.xi)


def _shift_mean(old: float, bernoulli: bool, lo: float, hi: float,
                sign: float, rng: np.random.Generator) -> float:
    # redraw the magnitude if reflection lands exactly back on the old mean
    while True:
        new = old + sign * rng.uniform(lo, hi)
        if bernoulli:
            if new > 1.0:
                new = 2.0 - new
            elif new < 0.0:
                new = -new
        if new != old:
            return new


def generate_geometric_instance(cfg: GeometricEnvConfig,
                                rng: np.random.Generator) -> PiecewiseInstance:
    """Draw one random instance under the geometric spacing model."""
    rho = cfg.change_probability
    change_points = []
    pos = 1
    while True:
        pos += int(rng.geometric(rho))
        if pos > cfg.horizon:
            break
        change_points.append(pos)

    bernoulli = cfg.arm_model.family == "bernoulli"
    lo, hi = cfg.magnitude_range
    means = np.empty((len(change_points) + 1, cfg.num_arms))
    means[0] = rng.uniform(*cfg.initial_mean_range, size=cfg.num_arms)
    for k in range(1, len(change_points) + 1):
        means[k] = means[k - 1]
        arm = int(rng.integers(cfg.num_arms))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        means[k, arm] = _shift_mean(means[k - 1, arm], bernoulli, lo, hi, sign, rng)

    return PiecewiseInstance(
        num_arms=cfg.num_arms,
        horizon=cfg.horizon,
        change_points=np.asarray(change_points, dtype=np.int64),
        means=means,
        arm_model=cfg.arm_model,
    )


# ---------------------------------------------------------------------------
# line-oriented text serialization, for replay and debugging

_MAGIC = "dabsim-instance 1"


def instance_to_text(instance: PiecewiseInstance) -> str:
    lines = [
        _MAGIC,
        f"arms {instance.num_arms}",
        f"horizon {instance.horizon}",
        f"model {instance.arm_model.family} {instance.arm_model.sigma!r}",
        "changepoints " + " ".join(str(int(v)) for v in instance.change_points),
    ]
    for row in instance.means:
        lines.append("means " + " ".join(repr(float(m)) for m in row))
    return "\n".join(lines) + "\n"


def instance_from_text(text: str) -> PiecewiseInstance:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not an instance file (bad header)")

    def take(keyword, line):
        head, _, rest = line.partition(" ")
        if head != keyword:
            raise ValueError(f"expected {keyword!r} line, got {line!r}")
        return rest

    try:
        num_arms = int(take("arms", lines[1]))
        horizon = int(take("horizon", lines[2]))
        family, sigma = take("model", lines[3]).split()
        cps_text = take("changepoints", lines[4])
        change_points = [int(v) for v in cps_text.split()] if cps_text else []
        means = [[float(v) for v in take("means", ln).split()] for ln in lines[5:]]
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed instance file: {exc}") from exc
    return PiecewiseInstance(
        num_arms=num_arms,
        horizon=horizon,
        change_points=np.asarray(change_points, dtype=np.int64),
        means=np.asarray(means, dtype=np.float64),
        arm_model=ArmModel(family=family, sigma=float(sigma)),
    )


def save_instance(instance: PiecewiseInstance, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_text(instance))


def load_instance(path) -> PiecewiseInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_text(fh.read())
