"""Small planning problems with brute-force answers, used to check the planner."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .gait import CANONICAL_GAITS, TROT, gait_distance
from .learner import BehaviorSpec, BundleTrainConfig, collect_dataset, fit_regressor, observation_features
from .models import (
    COT_SPEEDS,
    COT_TABLE,
    AnalyticDynamics,
    ModelBundle,
    ProportionalPolicy,
    SurrogateParams,
    ZeroValue,
    analytic_bundle,
    initial_observation,
    power_model,
)
from .planner import PlannerConfig, PlannerState, evaluate_batch, plan
from .rewards import RewardWeights, cost_of_transport


@dataclass(frozen=True)
class QuadraticActionReward:
    """``-(a - target)^2`` on the first action component, whatever the state."""

    target: float = 0.3
    action_dim: int = 1

    def predict(self, obs, actions) -> np.ndarray:
        a = np.asarray(actions, dtype=float)
        return -((a[..., 0] - self.target) ** 2)


@dataclass(frozen=True)
class ConstantReward:
    value: float = 0.0
    action_dim: int = 1

    def predict(self, obs, actions) -> np.ndarray:
        return np.full(np.asarray(obs).shape[:-1], self.value)


def quadratic_problem(target: float = 0.3, params: SurrogateParams = SurrogateParams()):
    """H = 1, value zero, reward peaked at ``target``; no actor-divergence or gait terms."""
    bundle = ModelBundle(AnalyticDynamics(params), QuadraticActionReward(target),
                         ZeroValue(), ProportionalPolicy(params))
    weights = RewardWeights((1.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    cfg = PlannerConfig(horizon=1, weights=weights)
    obs = initial_observation(1.0, 1.0, TROT)
    return bundle, obs, cfg


def tracking_problem(params: SurrogateParams = SurrogateParams()):
    """H = 2, value zero: catch up from 1.0 to 1.05 m/s under action-change and clone penalties.

    The energy and gait terms are off, so only the two actions matter.
    """
    weights = RewardWeights((10.0, 0.0, 0.3, 0.05, 0.1, 0.0))
    full = analytic_bundle(params, weights)
    bundle = replace(full, value=ZeroValue())
    cfg = PlannerConfig(horizon=2, weights=weights)
    obs = initial_observation(1.0, 1.05, TROT)
    return bundle, obs, cfg


def exhaustive_best(bundle, obs, cfg: PlannerConfig, state: PlannerState = PlannerState(),
                    points: int = 201) -> tuple[float, np.ndarray]:
    """Best return over an action grid with the gait held at ``state.g_cmd_prev``."""
    grid = np.linspace(-1.0, 1.0, points)
    combos = np.array(list(itertools.product(grid, repeat=cfg.horizon * cfg.action_dim)))
    actions = combos.reshape(len(combos), cfg.horizon, cfg.action_dim)
    g = state.g_cmd_prev.as_array()
    gaits = np.broadcast_to(g, (len(combos), cfg.horizon, 3))
    a_cloned = bundle.policy.predict(obs.flatten()[None, :])[0]
    ret = evaluate_batch(bundle, obs.flatten(), actions, gaits, g, a_cloned, cfg)
    best = int(np.argmax(ret))
    return float(ret[best]), actions[best]


def final_mean_return(bundle, obs, cfg: PlannerConfig, state: PlannerState, seed: int):
    """Plan once and score the final proposal mean.  Returns ``(return, action, new_state)``."""
    action, gait, new = plan(bundle, obs, state, cfg, seed)
    mu = new.prev_distribution.mu
    m = cfg.action_dim
    acts = np.clip(mu[:, :m], -1.0, 1.0)[None]
    gaits = np.mod(mu[:, m:], 1.0)[None]
    a_cloned = bundle.policy.predict(obs.flatten()[None, :])[0]
    r = evaluate_batch(bundle, obs.flatten(), acts, gaits, state.g_cmd_prev.as_array(), a_cloned, cfg)
    return float(r[0]), action, new


def relative_gap(found: float, best: float, worst: float | None = None) -> float:
    """Shortfall of ``found`` below ``best``, relative to ``|best|`` (or to ``best - worst``)."""
    scale = abs(best) if worst is None else best - worst
    return max(best - found, 0.0) / scale


def table_roundtrip(params: SurrogateParams = SurrogateParams()) -> float:
    """Largest deviation of the power model's cost of transport from the table."""
    worst = 0.0
    for name, row in COT_TABLE.items():
        for v, expected in zip(COT_SPEEDS, row):
            p = power_model(float(v), CANONICAL_GAITS[name], params)
            cot = cost_of_transport(p, params.mass, params.gravity, float(v))
            worst = max(worst, abs(cot - expected))
    return worst


def hand_checked_return() -> float:
    """Two steps of reward -1 and a terminal value of -10 at gamma 0.99."""
    params = SurrogateParams()

    @dataclass(frozen=True)
    class _ConstValue:
        action_dim: int = 1

        def predict(self, obs):
            return np.full(np.asarray(obs).shape[:-1], -10.0)

    bundle = ModelBundle(AnalyticDynamics(params), ConstantReward(-1.0), _ConstValue(),
                         ProportionalPolicy(params))
    cfg = PlannerConfig(horizon=2, weights=RewardWeights((1.0, 0.0, 0.0, 0.0, 0.0, 5.0)))
    obs = initial_observation(1.0, 1.0, TROT)
    acts = np.zeros((1, 2, 1))
    g = TROT.as_array()
    gaits = np.broadcast_to(g, (1, 2, 3))
    return float(evaluate_batch(bundle, obs.flatten(), acts, gaits, g, np.zeros(1), cfg)[0])


def dominant_penalty_gait_error(seed: int = 0, lam: float = 1e9) -> float:
    """Distance between the returned gait and the previous one when lambda is huge."""
    params = SurrogateParams()
    weights = RewardWeights((10.0, 0.002, 0.3, 0.05, 0.1, lam))
    bundle = analytic_bundle(params, weights)
    cfg = PlannerConfig(weights=weights)
    obs = initial_observation(2.0, 2.0, TROT)
    _, gait, _ = plan(bundle, obs, PlannerState(g_cmd_prev=TROT), cfg, seed)
    return gait_distance(gait, TROT)


def constant_reward_value_error(seed: int = 3, episodes: int = 12, gamma: float = 0.99) -> float:
    """Worst relative error of a fitted value head against ``r / (1 - gamma)``.

    Noise-free episodes at a fixed canonical gait that start at their command
    speed earn the same reward every step, so the geometric series is exact up
    to the truncated tail.
    """
    spec = BehaviorSpec(action_noise=0.0, resample_gait=False, v0_spread=0.0,
                        canonical_fraction=1.0, gait_jitter=0.0)
    ds = collect_dataset(episodes=episodes, seed=seed, behavior=spec, gamma=gamma)
    cfg = BundleTrainConfig()
    keep = ds.remaining() >= cfg.value_min_remaining
    feats = observation_features(ds.obs)
    reg, _ = fit_regressor(feats[keep], ds.mc_return[keep], cfg.value, "value")
    oracle = ds.reward / (1.0 - gamma)
    return float(np.max(np.abs(reg.predict(feats)[:, 0] - oracle) / np.abs(oracle)))
