"""Observation layout, model interfaces, and the analytic locomotion surrogate.

The planner talks to four models: dynamics, reward, value and a cloned
policy.  All of them work on *flat* observation arrays of shape
``(batch, OBS_DIM)`` so that hundreds of imagined rollouts advance in one
numpy call.  :class:`Observation` is the readable single-step view of one
row of such an array.

The analytic surrogate is a 1-D longitudinal locomotion template.  Its only
gait-dependent quantity is mechanical power, which is interpolated from
the fixed-gait cost-of-transport table below.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Protocol, Sequence

import numba
import numpy as np

from .gait import (
    CANONICAL_ARRAY,
    GAIT_NAMES,
    TROT,
    GaitCommand,
    InvalidInputError,
    wrap,
)
from .rewards import RewardWeights

# Fixed-gait cost of transport, rows = gait, columns = speed.
COT_SPEEDS = np.array([0.5, 1.0, 1.5, 2.0])
COT_TABLE = {
    "trot": (1.09, 0.98, 1.07, 1.16),
    "pace": (1.28, 1.00, 1.11, 1.19),
    "bound": (1.55, 1.29, 1.29, 1.28),
    "pronk": (1.49, 1.09, 1.04, 1.08),
}
COT_ARRAY = np.array([COT_TABLE[n] for n in GAIT_NAMES])

# flat observation layout
V, OMEGA, PHASE, V_CMD = 0, 1, 2, 3
GAIT = slice(4, 7)
A_PREV = 7
BASE_DIM = 7
HISTORY_LEN = 30


class ModelDivergenceError(RuntimeError):
    """A model produced a non-finite output."""


def obs_dim(action_dim: int = 1) -> int:
    return BASE_DIM + action_dim


def clamp_action(a) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=float), -1.0, 1.0)


@dataclass(frozen=True)
class Observation:
    v: float
    omega: float = 0.0
    phase: float = 0.0
    v_cmd: float = 0.0
    gait: GaitCommand = TROT
    a_prev: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not (0.0 <= self.phase < 1.0):
            raise InvalidInputError(f"phase {self.phase!r} outside [0, 1)")
        object.__setattr__(self, "a_prev", tuple(float(x) for x in np.atleast_1d(self.a_prev)))

    @property
    def action_dim(self) -> int:
        return len(self.a_prev)

    def flatten(self) -> np.ndarray:
        return np.array([self.v, self.omega, self.phase, self.v_cmd,
                         *self.gait.offsets, *self.a_prev], dtype=float)

    @classmethod
    def from_flat(cls, x) -> "Observation":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size < BASE_DIM + 1:
            raise InvalidInputError(f"bad flat observation shape {x.shape}")
        return cls(v=float(x[V]), omega=float(x[OMEGA]), phase=float(x[PHASE]),
                   v_cmd=float(x[V_CMD]), gait=GaitCommand(tuple(float(g) for g in x[GAIT])),
                   a_prev=tuple(float(a) for a in x[A_PREV:]))

    def with_gait(self, g: GaitCommand) -> "Observation":
        return replace(self, gait=g)


@dataclass(frozen=True)
class SurrogateParams:
    """Physical constants of the surrogate robot and its controller."""

    mass: float = 12.0
    gravity: float = 9.81
    dt: float = 0.02
    a_max: float = 2.0
    f_step: float = 3.0
    duty: float = 0.5
    v_max: float = 3.0
    kappa: float = 0.05
    k_p: float = 1.0
    action_dim: int = 1

    def __post_init__(self):
        for name in ("mass", "gravity", "dt", "a_max", "f_step", "v_max"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0.0 < self.duty < 1.0:
            raise InvalidInputError("duty must be in (0, 1)")
        if self.kappa < 0:
            raise InvalidInputError("kappa must be non-negative")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


def cot_curves(v) -> np.ndarray:
    """Per-gait cost of transport at speed ``v``; last axis is the gait.

    Piecewise linear through the table speeds and flat outside them.
    """
    v = np.asarray(v, dtype=float)
    idx = np.clip(np.searchsorted(COT_SPEEDS, v) - 1, 0, len(COT_SPEEDS) - 2)
    lo = COT_SPEEDS[idx]
    frac = np.clip((v - lo) / (COT_SPEEDS[idx + 1] - lo), 0.0, 1.0)[..., None]
    left = COT_ARRAY.T[idx]
    return left + frac * (COT_ARRAY.T[idx + 1] - left)


# Gait-grid corners {0, 1/2}^3.  The four with an even number of 1/2
# offsets are the canonical gaits; each odd corner is adjacent (one offset
# away) to three canonical gaits.
_CORNERS = np.array([[a, b, c] for a in (0.0, 0.5) for b in (0.0, 0.5) for c in (0.0, 0.5)])
_CANONICAL_CORNER = np.array([
    next((i for i, g in enumerate(CANONICAL_ARRAY) if np.array_equal(g, c)), -1) for c in _CORNERS])
_ODD = np.flatnonzero(_CANONICAL_CORNER < 0)
_EVEN = np.flatnonzero(_CANONICAL_CORNER >= 0)
_ODD_NEIGHBOURS = np.array([
    [_CANONICAL_CORNER[j] for j in _EVEN if np.sum(_CORNERS[j] != _CORNERS[i]) == 1] for i in _ODD])


def corner_weights(g) -> np.ndarray:
    """Trilinear weights of wrapped gaits over the eight grid corners.

    Per component the weight of the 0-corner falls linearly from 1 at offset
    0 to 0 at offset 1/2 (circularly); weights sum to one.
    """
    x = np.asarray(g.as_array() if isinstance(g, GaitCommand) else g, dtype=float)
    to_half = 2.0 * np.minimum(x, 1.0 - x)
    t = np.stack([1.0 - to_half, to_half], axis=-1)
    w = (t[..., 0, :, None, None] * t[..., 1, None, :, None] * t[..., 2, None, None, :])
    return w.reshape(x.shape[:-1] + (8,))


def corner_cot(v, kappa: float) -> np.ndarray:
    """Cost of transport at the eight grid corners; last axis is the corner.

    Canonical corners take the table curve; the others take the cheapest
    adjacent canonical gait plus ``kappa``.
    """
    canon = cot_curves(v)
    out = np.empty(canon.shape[:-1] + (8,))
    out[..., _EVEN] = canon[..., _CANONICAL_CORNER[_EVEN]]
    out[..., _ODD] = canon[..., _ODD_NEIGHBOURS].min(axis=-1) + kappa
    return out


def _corner_breakpoints() -> np.ndarray:
    """Table speeds plus every speed where two canonical curves cross.

    All corner curves are piecewise linear on this grid (the odd-corner
    minima only bend where two curves cross).
    """
    pts = set(COT_SPEEDS.tolist())
    for k in range(len(COT_SPEEDS) - 1):
        v0, v1 = COT_SPEEDS[k], COT_SPEEDS[k + 1]
        for i in range(len(COT_ARRAY)):
            for j in range(i + 1, len(COT_ARRAY)):
                d0 = COT_ARRAY[i, k] - COT_ARRAY[j, k]
                d1 = COT_ARRAY[i, k + 1] - COT_ARRAY[j, k + 1]
                if d0 * d1 < 0:
                    pts.add(float(v0 + (v1 - v0) * d0 / (d0 - d1)))
    return np.array(sorted(pts))


_GRID = _corner_breakpoints()


@lru_cache(maxsize=8)
def _corner_table(kappa: float) -> np.ndarray:
    """Corner cost of transport at the breakpoint grid, shape ``(8, len(grid))``."""
    return corner_cot(_GRID, kappa).T.copy()


def gait_cot_reference(v, g, params: SurrogateParams = SurrogateParams()) -> np.ndarray:
    """Vectorized-numpy evaluation of :func:`gait_cot`, kept as its cross-check."""
    v = np.asarray(v, dtype=float)
    curves = corner_weights(g) @ _corner_table(params.kappa)
    curves, v = np.broadcast_arrays(curves, v[..., None])
    v = v[..., 0]
    idx = np.clip(np.searchsorted(_GRID, v) - 1, 0, len(_GRID) - 2)
    lo = _GRID[idx]
    frac = np.clip((v - lo) / (_GRID[idx + 1] - lo), 0.0, 1.0)
    left = np.take_along_axis(curves, idx[..., None], axis=-1)[..., 0]
    right = np.take_along_axis(curves, idx[..., None] + 1, axis=-1)[..., 0]
    return left + frac * (right - left)


@numba.njit(cache=True, nogil=True)
def _gait_cot_kernel(v, g, grid, table):
    n = v.shape[0]
    nk = grid.shape[0]
    out = np.empty(n)
    t = np.empty((3, 2))
    for i in range(n):
        for c in range(3):
            x = g[i, c]
            h = 2.0 * min(x, 1.0 - x)
            t[c, 0] = 1.0 - h
            t[c, 1] = h
        vi = v[i]
        k = 0
        while k < nk - 2 and vi > grid[k + 1]:
            k += 1
        f = min(max((vi - grid[k]) / (grid[k + 1] - grid[k]), 0.0), 1.0)
        acc = 0.0
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    j = 4 * a + 2 * b + c
                    acc += t[0, a] * t[1, b] * t[2, c] * (table[j, k] + f * (table[j, k + 1] - table[j, k]))
        out[i] = acc
    return out


def gait_cot(v, g, params: SurrogateParams = SurrogateParams()):
    """Cost of transport for (wrapped) gait ``g`` at speed ``v`` (batched).

    Trilinear over the gait grid, piecewise linear in speed.
    """
    offsets = np.asarray(g.as_array() if isinstance(g, GaitCommand) else g, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(v.shape, offsets.shape[:-1])
    if v.shape != shape:
        v = np.broadcast_to(v, shape)
    if offsets.shape[:-1] != shape:
        offsets = np.broadcast_to(offsets, shape + (3,))
    vf = np.ascontiguousarray(v.reshape(-1))
    gf = np.ascontiguousarray(offsets.reshape(-1, 3))
    out = _gait_cot_kernel(vf, gf, _GRID, _corner_table(params.kappa)).reshape(shape)
    return float(out) if out.ndim == 0 else out


def power_model(v, g, params: SurrogateParams = SurrogateParams()):
    """Mechanical power in watts at speed ``v`` with gait ``g``."""
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise InvalidInputError("speed must be non-negative")
    p = np.asarray(gait_cot(v_arr, g, params)) * params.weight * v_arr
    return float(p) if np.ndim(p) == 0 else p


# --- model interfaces -------------------------------------------------------

class DynamicsModel(Protocol):
    action_dim: int

    def predict(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray: ...


class RewardModel(Protocol):
    action_dim: int

    def predict(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray: ...


class ValueModel(Protocol):
    action_dim: int

    def predict(self, obs: np.ndarray) -> np.ndarray: ...


class PolicyModel(Protocol):
    action_dim: int

    def predict(self, obs: np.ndarray) -> np.ndarray: ...


def _checked(out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise ModelDivergenceError(f"{what} produced a non-finite output")
    return out


class _SingleStepMixin:
    """Observation-level wrappers around the batched ``predict`` methods."""

    def step(self, o: Observation, a) -> Observation:
        out = self.predict(o.flatten()[None, :], np.atleast_2d(a))
        return Observation.from_flat(_checked(out, "dynamics")[0])

    def reward(self, o: Observation, a) -> float:
        out = self.predict(o.flatten()[None, :], np.atleast_2d(a))
        return float(_checked(out, "reward")[0])

    def value(self, o: Observation) -> float:
        return float(_checked(self.predict(o.flatten()[None, :]), "value")[0])

    def act(self, history: Sequence[Observation]) -> np.ndarray:
        if len(history) == 0:
            raise InvalidInputError("policy needs a non-empty observation history")
        hist = pad_history(history)
        return _checked(self.predict(hist[-1].flatten()[None, :]), "policy")[0]


def pad_history(history: Sequence[Observation], length: int = HISTORY_LEN) -> list[Observation]:
    """Left-pad (by repeating the oldest entry) or trim to ``length`` entries."""
    hist = list(history)[-length:]
    return [hist[0]] * (length - len(hist)) + hist


@dataclass(frozen=True)
class AnalyticDynamics(_SingleStepMixin):
    params: SurrogateParams = SurrogateParams()

    @property
    def action_dim(self) -> int:
        return self.params.action_dim

    def predict(self, obs, actions) -> np.ndarray:
        p = self.params
        x = np.asarray(obs, dtype=float)
        a = clamp_action(actions)
        nxt = x.copy()
        nxt[..., V] = np.clip(x[..., V] + a[..., 0] * p.a_max * p.dt, 0.0, p.v_max)
        nxt[..., OMEGA] = 0.0
        phase = np.mod(x[..., PHASE] + p.f_step * p.dt, 1.0)
        nxt[..., PHASE] = np.where(phase >= 1.0, 0.0, phase)
        nxt[..., A_PREV:] = a
        return nxt


@dataclass(frozen=True)
class AnalyticReward(_SingleStepMixin):
    """Weighted velocity, energy, angular and continuity penalties."""

    params: SurrogateParams = SurrogateParams()
    weights: RewardWeights = RewardWeights()

    @property
    def action_dim(self) -> int:
        return self.params.action_dim

    def predict(self, obs, actions) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        a = clamp_action(actions)
        w = self.weights.alpha
        v = np.clip(x[..., V], 0.0, None)
        r = -w[0] * (x[..., V] - x[..., V_CMD]) ** 2
        r = r - w[1] * power_model(v, x[..., GAIT], self.params)
        r = r - w[2] * x[..., OMEGA] ** 2
        r = r - w[3] * np.sum((a - x[..., A_PREV:]) ** 2, axis=-1)
        return r


@dataclass(frozen=True)
class AnalyticValue(_SingleStepMixin):
    """Steady-state heuristic: the current per-step reward, held forever."""

    params: SurrogateParams = SurrogateParams()
    weights: RewardWeights = RewardWeights()
    gamma: float = 0.99

    @property
    def action_dim(self) -> int:
        return self.params.action_dim

    def steady_reward(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        w = self.weights.alpha
        v = np.clip(x[..., V], 0.0, None)
        return (-w[0] * (x[..., V] - x[..., V_CMD]) ** 2
                - w[1] * power_model(v, x[..., GAIT], self.params)
                - w[2] * x[..., OMEGA] ** 2)

    def predict(self, obs) -> np.ndarray:
        return self.steady_reward(obs) / (1.0 - self.gamma)


@dataclass(frozen=True)
class ProportionalPolicy(_SingleStepMixin):
    """``a = clamp(k_p (v_cmd - v))``; only the newest observation matters."""

    params: SurrogateParams = SurrogateParams()

    @property
    def action_dim(self) -> int:
        return self.params.action_dim

    def predict(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        a = self.params.k_p * (x[..., V_CMD] - x[..., V])
        out = np.zeros(x.shape[:-1] + (self.params.action_dim,))
        out[..., 0] = a
        return clamp_action(out)


@dataclass(frozen=True)
class ZeroValue(_SingleStepMixin):
    action_dim: int = 1

    def predict(self, obs) -> np.ndarray:
        return np.zeros(np.asarray(obs).shape[:-1])


@dataclass(frozen=True)
class ModelBundle:
    dynamics: DynamicsModel
    reward: RewardModel
    value: ValueModel
    policy: PolicyModel
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        dims = {m.action_dim for m in (self.dynamics, self.reward, self.value, self.policy)}
        if len(dims) != 1:
            raise InvalidInputError(f"bundle members disagree on action dimension: {dims}")

    @property
    def action_dim(self) -> int:
        return self.dynamics.action_dim

    @property
    def obs_dim(self) -> int:
        return obs_dim(self.action_dim)


def analytic_bundle(params: SurrogateParams = SurrogateParams(),
                    weights: RewardWeights = RewardWeights(),
                    gamma: float = 0.99) -> ModelBundle:
    """The perfect-model bundle: the planner sees the true surrogate."""
    return ModelBundle(
        dynamics=AnalyticDynamics(params),
        reward=AnalyticReward(params, weights),
        value=AnalyticValue(params, weights, gamma),
        policy=ProportionalPolicy(params),
    )


def initial_observation(v: float, v_cmd: float, gait=TROT, action_dim: int = 1) -> Observation:
    g = gait if isinstance(gait, GaitCommand) else wrap(gait)
    return Observation(v=v, v_cmd=v_cmd, gait=g, a_prev=(0.0,) * action_dim)
