"""Continuous gait space: phase-offset commands, canonical gaits and contact schedules.

A gait command is a 3-vector of phase offsets on the unit circle.  Foot
offsets are ``(0, g1, g2, g3)`` for the feet ordered ``(FL, FR, RL, RR)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

FEET = ("FL", "FR", "RL", "RR")
GAIT_NAMES = ("trot", "pace", "bound", "pronk")
DEFAULT_DUTY = 0.5
DEFAULT_WEIGHT_SIGMA = 0.25


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


def wrap_array(raw) -> np.ndarray:
    """Reduce every entry of ``raw`` modulo 1 into ``[0, 1)``.

    Works elementwise on arrays of any shape; used by the planner on whole
    batches of sampled gaits.
    """
    x = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("gait components must be finite")
    out = np.mod(x, 1.0)
    # np.mod(-1e-18, 1.0) rounds to 1.0
    out[out >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class GaitCommand:
    """Three phase offsets in ``[0, 1)``.  Build through :func:`wrap`."""

    offsets: tuple[float, float, float]

    def __post_init__(self):
        if len(self.offsets) != 3:
            raise InvalidInputError("a gait command has exactly three offsets")
        for x in self.offsets:
            if not (0.0 <= x < 1.0):
                raise InvalidInputError(f"offset {x!r} outside [0, 1); use wrap()")

    def as_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=float)

    def __iter__(self):
        return iter(self.offsets)


def wrap(raw: Iterable[float]) -> GaitCommand:
    """Normalize an arbitrary real 3-vector onto the gait torus."""
    arr = wrap_array(np.asarray(list(raw), dtype=float))
    if arr.shape != (3,):
        raise InvalidInputError(f"expected 3 components, got shape {arr.shape}")
    return GaitCommand(tuple(float(x) for x in arr))


CANONICAL_GAITS: Mapping[str, GaitCommand] = MappingProxyType({
    "trot": GaitCommand((0.5, 0.5, 0.0)),
    "pace": GaitCommand((0.5, 0.0, 0.5)),
    "bound": GaitCommand((0.0, 0.5, 0.5)),
    "pronk": GaitCommand((0.0, 0.0, 0.0)),
})
TROT = CANONICAL_GAITS["trot"]
PACE = CANONICAL_GAITS["pace"]
BOUND = CANONICAL_GAITS["bound"]
PRONK = CANONICAL_GAITS["pronk"]

# rows ordered as GAIT_NAMES
CANONICAL_ARRAY = np.array([CANONICAL_GAITS[n].offsets for n in GAIT_NAMES])


def _as_offsets(g) -> np.ndarray:
    if isinstance(g, GaitCommand):
        return g.as_array()
    return np.asarray(g, dtype=float)


def circular_delta(a, b) -> np.ndarray:
    """Per-component distance on the unit circle, broadcasting over batches."""
    d = np.abs(_as_offsets(a) - _as_offsets(b))
    d = np.mod(d, 1.0)
    return np.minimum(d, 1.0 - d)


def gait_distance_sq(a, b) -> float | np.ndarray:
    """Sum of squared circular component distances.

    Accepts :class:`GaitCommand` values or arrays whose last axis has length
    3; array inputs return an array over the leading axes.
    """
    d = circular_delta(a, b)
    out = np.sum(d * d, axis=-1)
    if np.ndim(out) == 0:
        return float(out)
    return out


def gait_distance(a, b) -> float | np.ndarray:
    return np.sqrt(gait_distance_sq(a, b))


def foot_offsets(g: GaitCommand) -> np.ndarray:
    """Per-foot phase offsets in (FL, FR, RL, RR) order."""
    return np.concatenate(([0.0], _as_offsets(g)))


@dataclass(frozen=True)
class ContactState:
    stance: tuple[bool, bool, bool, bool]
    phase: float

    def __post_init__(self):
        if not (0.0 <= self.phase < 1.0):
            raise InvalidInputError(f"phase {self.phase!r} outside [0, 1)")


def contact_schedule(g: GaitCommand, phase: float, duty: float = DEFAULT_DUTY) -> ContactState:
    """Stance pattern for gait ``g`` at global phase ``phase``.

    A foot is in stance when its own phase ``frac(phase + offset)`` is below
    the duty factor.
    """
    if not (0.0 < duty < 1.0):
        raise InvalidInputError(f"duty factor must be in (0, 1), got {duty!r}")
    if not (0.0 <= phase < 1.0):
        raise InvalidInputError(f"phase {phase!r} outside [0, 1)")
    foot_phase = np.mod(phase + foot_offsets(g), 1.0)
    return ContactState(tuple(bool(p < duty) for p in foot_phase), float(phase))


def canonical_weights(g, sigma: float = DEFAULT_WEIGHT_SIGMA) -> np.ndarray:
    """Softmin weights of ``g`` over (trot, pace, bound, pronk).

    ``w_i ∝ exp(-d_i^2 / sigma^2)`` with ``d_i`` the circular distance to the
    i-th canonical gait.  Batched over leading axes of an array input.
    """
    offsets = _as_offsets(g)
    d2 = gait_distance_sq(offsets[..., None, :], CANONICAL_ARRAY)
    logits = -np.asarray(d2) / sigma**2
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def nearest_canonical(g) -> str:
    d2 = gait_distance_sq(_as_offsets(g)[None, :], CANONICAL_ARRAY)
    return GAIT_NAMES[int(np.argmin(d2))]
