"""Planning reward terms, their weighted total, and cost of transport.

Every term is a penalty (non-positive).  The scalar functions accept numpy
arrays and broadcast over leading batch axes so the planner can score many
rollouts at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .gait import InvalidInputError, gait_distance_sq

TERMS = ("r_vel", "r_energy", "r_ang", "r_cont", "r_div", "r_gait")


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    """Non-negative weights for the six reward terms.

    ``lambda_gait`` is the gait-continuity weight the planner uses; it is the
    same number as ``alpha[5]``.
    """

    alpha: tuple[float, ...] = (10.0, 0.002, 0.3, 0.05, 0.1, 5.0)

    def __post_init__(self):
        a = tuple(float(x) for x in self.alpha)
        if len(a) != 6:
            raise InvalidInputError("expected six reward weights")
        if not all(np.isfinite(x) and x >= 0.0 for x in a):
            raise InvalidInputError(f"reward weights must be finite and non-negative: {a}")
        object.__setattr__(self, "alpha", a)

    @property
    def lambda_gait(self) -> float:
        return self.alpha[5]

    def replace(self, **named) -> "RewardWeights":
        a = list(self.alpha)
        for name, value in named.items():
            a[TERMS.index(name)] = value
        return RewardWeights(tuple(a))


def _sq_norm(x):
    return np.sum(np.square(x), axis=-1)


def _check_same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1:] != b.shape[-1:]:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def r_vel(v_robot, v_target):
    """Velocity tracking: ``-|v_robot - v_target|^2``.

    Scalars are treated as 1-D forward speeds.
    """
    a, b = _check_same_shape(np.atleast_1d(v_robot), np.atleast_1d(v_target))
    return -_sq_norm(a - b)


def r_energy(power):
    p = np.asarray(power, dtype=float)
    if np.any(p < 0):
        raise InvalidInputError("power must be non-negative")
    return -p


def r_ang(omega):
    return -_sq_norm(np.atleast_1d(np.asarray(omega, dtype=float)))


def r_cont(a_t, a_prev):
    a, b = _check_same_shape(a_t, a_prev)
    return -_sq_norm(a - b)


def r_div(a_t, a_cloned):
    a, b = _check_same_shape(a_t, a_cloned)
    return -_sq_norm(a - b)


def r_gait(g_t, g_prev):
    """Gait continuity, measured with the circular distance."""
    return -gait_distance_sq(g_t, g_prev)


@dataclass(frozen=True)
class RewardBreakdown:
    r_vel: float = 0.0
    r_energy: float = 0.0
    r_ang: float = 0.0
    r_cont: float = 0.0
    r_div: float = 0.0
    r_gait: float = 0.0
    total: float = field(default=0.0)

    def components(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in TERMS])


def weighted_total(components, weights: RewardWeights):
    """``sum_i alpha_i * r_i`` over the last axis of ``components``."""
    return np.asarray(components, dtype=float) @ np.asarray(weights.alpha)


def total_reward(weights: RewardWeights, **terms: float) -> RewardBreakdown:
    """Combine per-term rewards into a :class:`RewardBreakdown`.

    Missing terms count as zero.
    """
    unknown = set(terms) - set(TERMS)
    if unknown:
        raise InvalidInputError(f"unknown reward terms: {sorted(unknown)}")
    comps = np.array([float(terms.get(n, 0.0)) for n in TERMS])
    if np.any(comps > 0):
        raise InvalidInputError("reward terms are penalties and must be <= 0")
    return RewardBreakdown(*comps, total=float(weighted_total(comps, weights)))


def cost_of_transport(mean_power, mass: float, gravity: float, mean_velocity: float) -> float:
    """Dimensionless ``|P| / (m g v)``."""
    if mass <= 0 or gravity <= 0:
        raise InvalidInputError("mass and gravity must be positive")
    if not mean_velocity > 0:
        raise UndefinedMetricError("cost of transport is undefined at non-positive mean velocity")
    return abs(float(mean_power)) / (mass * gravity * mean_velocity)


def breakdown_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RewardBreakdown))
