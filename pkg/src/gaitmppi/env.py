"""Ground-truth surrogate environment for closed-loop evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .gait import (
    TROT,
    ContactState,
    GaitCommand,
    InvalidInputError,
    circular_delta,
    contact_schedule,
    gait_distance_sq,
)
from .models import (
    V_CMD,
    AnalyticDynamics,
    Observation,
    SurrogateParams,
    ProportionalPolicy,
    clamp_action,
    power_model,
)
from . import rewards
from .rewards import RewardBreakdown, RewardWeights, cost_of_transport


@dataclass(frozen=True)
class CommandProfile:
    """Piecewise-linear commanded forward speed, held flat past either end."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bp = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if not bp:
            raise InvalidInputError("a command profile needs at least one breakpoint")
        times = [t for t, _ in bp]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError("profile times must be strictly increasing")
        if any(v < 0 for _, v in bp):
            raise InvalidInputError("commanded speeds must be non-negative")
        object.__setattr__(self, "breakpoints", bp)

    def __call__(self, t: float) -> float:
        ts, vs = zip(*self.breakpoints)
        return float(np.interp(t, ts, vs))

    @property
    def duration(self) -> float:
        return self.breakpoints[-1][0]


def constant_profile(v: float) -> CommandProfile:
    return CommandProfile(((0.0, v),))


def ramp_profile(v_start: float, v_end: float, duration: float) -> CommandProfile:
    if duration <= 0:
        raise InvalidInputError("ramp duration must be positive")
    return CommandProfile(((0.0, v_start), (duration, v_end)))


@dataclass(frozen=True)
class EnvState:
    obs: Observation
    time: float = 0.0
    cumulative_energy: float = 0.0
    distance: float = 0.0


@dataclass(frozen=True)
class StepOutcome:
    next: EnvState
    reward: RewardBreakdown
    power: float
    contacts: ContactState
    action: np.ndarray
    gait: GaitCommand
    prev: EnvState


Controller = Callable[[Observation], tuple[np.ndarray, GaitCommand]]


class ControllerError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"controller failed at step {step}: {cause}")
        self.step = step
        self.__cause__ = cause


@dataclass
class RolloutTrace:
    outcomes: list[StepOutcome]
    params: SurrogateParams
    transient: float = 1.0

    def __len__(self):
        return len(self.outcomes)

    def arrays(self) -> dict[str, np.ndarray]:
        o = self.outcomes
        return {
            "time": np.array([x.prev.time for x in o]),
            "v_cmd": np.array([x.prev.obs.v_cmd for x in o]),
            "v": np.array([x.prev.obs.v for x in o]),
            "power": np.array([x.power for x in o]),
            "gait": np.array([x.gait.offsets for x in o]),
            "gait_change": np.array([np.sqrt(gait_distance_sq(x.gait, x.prev.obs.gait)) for x in o]),
            "gait_step": np.array([circular_delta(x.gait, x.prev.obs.gait) for x in o]),
            "contacts": np.array([x.contacts.stance for x in o], dtype=int),
        }

    def _window(self, skip_transient: bool) -> slice:
        if not skip_transient:
            return slice(None)
        times = np.array([x.prev.time for x in self.outcomes])
        start = int(np.searchsorted(times, self.transient - 1e-9))
        if start >= len(times):
            start = 0
        return slice(start, None)

    def tracking_error(self, skip_transient: bool = True) -> float:
        a = self.arrays()
        sl = self._window(skip_transient)
        return float(np.mean(np.abs(a["v"][sl] - a["v_cmd"][sl])))

    def cot(self, skip_transient: bool = True) -> float:
        a = self.arrays()
        sl = self._window(skip_transient)
        return cost_of_transport(np.mean(a["power"][sl]), self.params.mass,
                                 self.params.gravity, np.mean(a["v"][sl]))

    def mean_gait_change(self) -> float:
        return float(np.mean(self.arrays()["gait_change"]))

    def summary(self) -> dict[str, float]:
        return {
            "tracking_error": self.tracking_error(),
            "cot": self.cot(),
            "mean_gait_change": self.mean_gait_change(),
        }


@dataclass
class SurrogateEnv:
    """True plant: the analytic longitudinal template plus a command profile."""

    params: SurrogateParams = field(default_factory=SurrogateParams)
    weights: RewardWeights = field(default_factory=RewardWeights)
    profile: CommandProfile = field(default_factory=lambda: constant_profile(1.0))

    def __post_init__(self):
        self._dynamics = AnalyticDynamics(self.params)

    def reset(self, v0: float = 0.0, gait0: GaitCommand = TROT,
              profile: CommandProfile | None = None) -> EnvState:
        if v0 < 0:
            raise InvalidInputError("initial speed must be non-negative")
        if profile is not None:
            self.profile = profile
        obs = Observation(v=float(v0), v_cmd=self.profile(0.0), gait=gait0,
                          a_prev=(0.0,) * self.params.action_dim)
        return EnvState(obs)

    def step(self, s: EnvState, a, g: GaitCommand, dt: float | None = None) -> StepOutcome:
        dt = self.params.dt if dt is None else dt
        if dt <= 0:
            raise InvalidInputError("dt must be positive")
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("action must be finite")
        a = clamp_action(a)
        o = s.obs
        p = self.params
        power = power_model(o.v, g, p)
        breakdown = rewards.total_reward(
            self.weights,
            r_vel=float(rewards.r_vel(o.v, o.v_cmd)),
            r_energy=float(rewards.r_energy(power)),
            r_ang=float(rewards.r_ang(o.omega)),
            r_cont=float(rewards.r_cont(a, np.asarray(o.a_prev))),
            r_gait=float(rewards.r_gait(g, o.gait)),
        )
        contacts = contact_schedule(g, o.phase, p.duty)
        dyn = self._dynamics if dt == p.dt else AnalyticDynamics(replace(p, dt=dt))
        x = o.with_gait(g).flatten()
        nxt = dyn.predict(x[None, :], a[None, :])[0]
        t_next = s.time + dt
        nxt[V_CMD] = self.profile(t_next)
        next_state = EnvState(
            obs=Observation.from_flat(nxt),
            time=t_next,
            cumulative_energy=s.cumulative_energy + power * dt,
            distance=s.distance + o.v * dt,
        )
        return StepOutcome(next_state, breakdown, float(power), contacts, a, g, s)

    def rollout(self, s0: EnvState, controller: Controller, steps: int,
                dt: float | None = None, transient: float = 1.0) -> RolloutTrace:
        if steps < 1:
            raise InvalidInputError("a rollout needs at least one step")
        s = s0
        outcomes = []
        for i in range(steps):
            try:
                a, g = controller(s.obs)
            except Exception as exc:
                raise ControllerError(i, exc) from exc
            out = self.step(s, a, g, dt)
            outcomes.append(out)
            s = out.next
        return RolloutTrace(outcomes, self.params, transient)


def fixed_gait_controller(gait: GaitCommand, params: SurrogateParams = SurrogateParams()) -> Controller:
    """Proportional speed tracking with a constant gait."""
    policy = ProportionalPolicy(params)

    def control(o: Observation):
        return policy.predict(o.flatten()[None, :])[0], gait

    return control
