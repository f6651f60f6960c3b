"""Index policies for stationary stochastic bandits.

Each policy keeps per-arm pull counts and reward sums plus the number of
completed updates, and exposes select / update / reset / indices. Selection
first plays any never-pulled arm (lowest index wins), then maximizes the
policy's confidence index; ties again go to the lowest arm index. Selection
is deterministic given the internal state, which makes whole trials
replayable from the reward stream alone.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .kl import _klucb_solve, klucb_bound, klucb_bounds

POLICY_NAMES = ("ucb", "klucb", "moss")

DISPLAY_NAMES = {"ucb": "UCB", "klucb": "klUCB", "moss": "MOSS"}


# Compiled select loops. Each one replays the generic path exactly: play the
# lowest-index never-pulled arm, otherwise the first maximizer of the index.
# The arithmetic mirrors the indices() methods operation for operation so the
# two paths agree bitwise; tests hold them in lockstep.

@njit(cache=True)
def _ucb_select(sums, counts, bonus_num):
    best, best_val = 0, -np.inf
    for a in range(counts.size):
        n = counts[a]
        if n == 0:
            return a
        val = sums[a] / n + math.sqrt(bonus_num / n)
        if val > best_val:
            best, best_val = a, val
    return best


@njit(cache=True)
def _klucb_select(sums, counts, threshold):
    best, best_val = 0, -np.inf
    for a in range(counts.size):
        n = counts[a]
        if n == 0:
            return a
        val = _klucb_solve(sums[a] / n, float(n), threshold)
        if val > best_val:
            best, best_val = a, val
    return best


@njit(cache=True)
def _moss_select(sums, counts, sigma, horizon, num_arms):
    best, best_val = 0, -np.inf
    for a in range(counts.size):
        n = counts[a]
        if n == 0:
            return a
        log_term = math.log(horizon / (num_arms * n))
        if log_term < 0.0:
            log_term = 0.0
        val = sums[a] / n + sigma * math.sqrt(log_term / n)
        if val > best_val:
            best, best_val = a, val
    return best


class StationaryPolicy:
    """Shared bookkeeping: counts, reward sums, completed-update counter."""

    name = "base"

    def __init__(self, num_arms: int, horizon: int):
        if num_arms < 2:
            raise ValueError("need at least 2 arms")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.num_arms = num_arms
        self.horizon = horizon
        self.counts = np.zeros(num_arms, dtype=np.int64)
        self.sums = np.zeros(num_arms, dtype=np.float64)
        self.t = 0

    def reset(self) -> None:
        self.counts[:] = 0
        self.sums[:] = 0.0
        self.t = 0

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.t += 1

    def select(self) -> int:
        cold = np.flatnonzero(self.counts == 0)
        if cold.size:
            return int(cold[0])
        return int(np.argmax(self.indices()))

    def indices(self) -> np.ndarray:
        """Per-arm confidence indices; never-pulled arms get +inf."""
        raise NotImplementedError

    def _means_where_pulled(self):
        pulled = self.counts > 0
        means = np.where(pulled, self.sums, 0.0) / np.maximum(self.counts, 1)
        return pulled, means


class UcbPolicy(StationaryPolicy):
    """Mean plus sqrt(2 sigma^2 ln(t) / n), evaluated at t = completed updates."""

    name = "ucb"

    def __init__(self, num_arms: int, horizon: int, sigma: float = 1.0):
        super().__init__(num_arms, horizon)
        if sigma <= 0.0:
            raise ValueError("sigma must be positive")
        self.sigma = sigma

    def select(self) -> int:
        log_t = math.log(max(self.t, 1))
        return int(_ucb_select(self.sums, self.counts,
                               2.0 * self.sigma ** 2 * log_t))

    def indices(self) -> np.ndarray:
        pulled, means = self._means_where_pulled()
        log_t = math.log(max(self.t, 1))
        radius = np.sqrt(2.0 * self.sigma ** 2 * log_t / np.maximum(self.counts, 1))
        return np.where(pulled, means + radius, np.inf)


class KlUcbPolicy(StationaryPolicy):
    """Bernoulli-KL upper confidence bound with threshold ln(t) + c ln(ln(t))."""

    name = "klucb"

    def __init__(self, num_arms: int, horizon: int, c: float = 3.0):
        super().__init__(num_arms, horizon)
        if c < 0.0:
            raise ValueError("c must be nonnegative")
        self.c = c
        self._scratch = np.empty(num_arms)

    def exploration_threshold(self, t: int) -> float:
        """ln(t) + c ln(ln(t)), with the ln(ln(t)) term floored at zero."""
        if t < 2:
            return 0.0
        log_t = math.log(t)
        return log_t + self.c * max(0.0, math.log(log_t))

    def select(self) -> int:
        threshold = self.exploration_threshold(max(self.t, 1))
        return int(_klucb_select(self.sums, self.counts, threshold))

    def indices(self) -> np.ndarray:
        pulled, means = self._means_where_pulled()
        threshold = self.exploration_threshold(max(self.t, 1))
        bounds = klucb_bounds(means, self.counts, threshold, out=self._scratch)
        return np.where(pulled, bounds, np.inf)


class MossPolicy(StationaryPolicy):
    """Mean plus sigma sqrt(max(0, ln(T / (A n))) / n); horizon-aware radius."""

    name = "moss"

    def __init__(self, num_arms: int, horizon: int, sigma: float = 1.0):
        super().__init__(num_arms, horizon)
        if sigma <= 0.0:
            raise ValueError("sigma must be positive")
        self.sigma = sigma

    def select(self) -> int:
        return int(_moss_select(self.sums, self.counts, self.sigma,
                                self.horizon, self.num_arms))

    def indices(self) -> np.ndarray:
        pulled, means = self._means_where_pulled()
        n = np.maximum(self.counts, 1)
        log_term = np.maximum(0.0, np.log(self.horizon / (self.num_arms * n)))
        return np.where(pulled, means + self.sigma * np.sqrt(log_term / n), np.inf)


def make_policy(name: str, num_arms: int, horizon: int, *,
                sigma: float = 1.0, klucb_c: float = 3.0) -> StationaryPolicy:
    """Build a policy from its lower-case registry name."""
    key = name.lower()
    if key == "ucb":
        return UcbPolicy(num_arms, horizon, sigma=sigma)
    if key == "klucb":
        return KlUcbPolicy(num_arms, horizon, c=klucb_c)
    if key == "moss":
        return MossPolicy(num_arms, horizon, sigma=sigma)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


__all__ = [
    "POLICY_NAMES",
    "DISPLAY_NAMES",
    "StationaryPolicy",
    "UcbPolicy",
    "KlUcbPolicy",
    "MossPolicy",
    "make_policy",
    "klucb_bound",
]
