"""Difficulty-regulated rewards and the all-bypass baseline.

Every non-bypass choice costs a fixed penalty.  The last block
additionally earns the restoration gain (the drop in L2 loss relative
to the unprocessed input), scaled by a difficulty coefficient in [0, 1]
that rises with the output's remaining loss and saturates at a
threshold — so compute spent polishing an already-easy region pays out
less than compute spent on a hard one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, no_grad
from .errors import ConfigError, UsageError


@dataclass(frozen=True)
class RewardConfig:
    penalty: float = 8e-6     # per-block charge for a non-bypass path
    threshold: float = 5e-4   # loss level where difficulty saturates at 1
    regulated: bool = True    # False: difficulty pinned to 1 (ablation)

    def __post_init__(self):
        if self.penalty <= 0:
            raise ConfigError("penalty must be > 0")
        if self.threshold <= 0:
            raise ConfigError("threshold must be > 0")


@dataclass
class TrajectoryReward:
    rewards: list[float]   # r_1..r_N
    returns: list[float]   # R_i = sum of r_j for j >= i
    baseline: float = 0.0

    @property
    def total(self) -> float:
        return self.returns[0]


def mean_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference in float64, the scalar loss all reward
    math runs on."""
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def difficulty(loss: float, threshold: float) -> float:
    """Piecewise-linear difficulty: loss/threshold below the threshold,
    1 at or above it."""
    if loss < 0:
        raise UsageError(f"difficulty: negative loss {loss}")
    if threshold <= 0:
        raise UsageError("difficulty: threshold must be > 0")
    return loss / threshold if loss < threshold else 1.0


def step_reward(i: int, n: int, action: int, penalty: float, diff: float,
                delta: float) -> float:
    """Reward of block i: the bypass penalty term, plus (at the last
    block only) the difficulty-scaled performance gain -delta."""
    r = 0.0 if action == 1 else -penalty
    if i == n:
        r += diff * (-delta)
    return r


def delta_l2(x: np.ndarray, restored: np.ndarray, y: np.ndarray) -> float:
    """Change in L2 loss against ground truth: output loss minus input
    loss.  Negative when restoration improved the patch."""
    if x.shape != restored.shape or x.shape != y.shape:
        raise ConfigError("delta_l2: shape mismatch")
    return mean_sq(restored, y) - mean_sq(x, y)


def trajectory_rewards(actions, x: np.ndarray, restored: np.ndarray, y: np.ndarray,
                       cfg: RewardConfig) -> TrajectoryReward:
    """Per-block rewards and suffix-sum returns for one routed patch."""
    if hasattr(actions, "actions"):
        actions = actions.actions
    n = len(actions)
    d = difficulty(mean_sq(restored, y), cfg.threshold) if cfg.regulated else 1.0
    delta = delta_l2(x, restored, y)
    rewards = [step_reward(i, n, a, cfg.penalty, d, delta)
               for i, a in enumerate(actions, start=1)]
    returns = list(rewards)
    for i in range(n - 2, -1, -1):
        returns[i] += returns[i + 1]
    return TrajectoryReward(rewards=rewards, returns=returns)


def bypass_baseline(x: np.ndarray, y: np.ndarray, model, cfg: RewardConfig) -> float:
    """Total reward of the same patch under the forced all-bypass route:
    no penalties, just the (difficulty-scaled) gain of the cheapest
    pass.  Deterministic, independent of the pathfinder."""
    route = [1] * model.cfg.blocks
    with no_grad():
        restored, _ = model.forward_routed(Tensor(x[None]), route)
    out = restored.data[0]
    d = difficulty(mean_sq(out, y), cfg.threshold) if cfg.regulated else 1.0
    return d * (-delta_l2(x, out, y))
