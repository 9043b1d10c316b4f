"""Sampling-based planner over joint (action, gait) trajectories.

Each control step:

1. warm start the proposal from cloned-policy rollouts through the dynamics
   model, blended with the time-shifted distribution from the last step;
2. for ``iterations`` rounds, sample trajectories, wrap their gaits, score
   them by discounted model reward minus the gait-continuity penalty plus a
   discounted terminal value, keep the elites and move the proposal toward
   them with momentum;
3. execute the first step of the final mean.

Gait columns of the proposal live in unwrapped coordinates; wrapping only
happens when a sample is scored.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gait import TROT, GaitCommand, InvalidInputError, wrap, wrap_array
from .models import GAIT, ModelBundle, ModelDivergenceError, Observation, clamp_action
from .rewards import RewardWeights
from .rng import block_normals, philox_key

log = logging.getLogger(__name__)

GAIT_DIM = 3


class PlannerFailureError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 6
    iterations: int = 6
    samples: int = 500
    policy_samples: int = 30
    elites: int = 60
    gamma: float = 0.99
    momentum: float = 0.95
    temperature: float = 0.5
    weights: RewardWeights = RewardWeights()
    sigma_floor: float = 0.05
    action_std: float = 0.5
    gait_std: float = 0.15
    action_dim: int = 1
    warm_blend: float = 0.5
    weighted_elites: bool = True
    sample_output: bool = False
    policy_candidates: bool = True
    carry_gait_plan: bool = True
    gait_carry: float = 0.7
    carry_best: bool = True
    block_size: int = 1024
    workers: int = 1

    def __post_init__(self):
        if self.horizon < 1 or self.iterations < 1:
            raise InvalidInputError("horizon and iterations must be >= 1")
        if not 1 <= self.elites <= self.samples:
            raise InvalidInputError("need 1 <= elites <= samples")
        if not 1 <= self.policy_samples <= self.samples:
            raise InvalidInputError("need 1 <= policy_samples <= samples")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInputError("gamma must be in (0, 1)")
        if not 0.0 <= self.momentum <= 1.0:
            raise InvalidInputError("momentum must be in [0, 1]")
        if not (0.0 <= self.warm_blend <= 1.0 and 0.0 <= self.gait_carry <= 1.0):
            raise InvalidInputError("warm_blend and gait_carry must be in [0, 1]")
        if self.temperature <= 0 or self.sigma_floor <= 0:
            raise InvalidInputError("temperature and sigma_floor must be positive")
        if self.block_size < 1 or self.workers < 1:
            raise InvalidInputError("block_size and workers must be >= 1")

    @property
    def lambda_gait(self) -> float:
        return self.weights.lambda_gait

    @property
    def width(self) -> int:
        return self.action_dim + GAIT_DIM

    def exploration_std(self) -> np.ndarray:
        return np.array([self.action_std] * self.action_dim + [self.gait_std] * GAIT_DIM)


@dataclass(frozen=True)
class ProposalDistribution:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 2:
            raise InvalidInputError("mu and sigma must be matching (H, width) arrays")

    @property
    def horizon(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class TrajectorySample:
    actions: np.ndarray
    gaits: tuple[GaitCommand, ...]
    ret: float


@dataclass(frozen=True)
class PlannerState:
    prev_distribution: ProposalDistribution | None = None
    g_cmd_prev: GaitCommand = TROT
    step_index: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)


def _floored(sigma: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
    return np.maximum(sigma, cfg.sigma_floor)


def shift_distribution(d: ProposalDistribution, cfg: PlannerConfig) -> ProposalDistribution:
    """Receding-horizon reuse: drop step 0, repeat the final mean at the end."""
    mu = np.vstack([d.mu[1:], d.mu[-1:]])
    sigma = np.vstack([d.sigma[1:], cfg.exploration_std()[None, :]])
    return ProposalDistribution(mu, _floored(sigma, cfg))


def policy_rollouts(bundle: ModelBundle, o: Observation, cfg: PlannerConfig) -> np.ndarray:
    """Actions of ``policy_samples`` policy rollouts through the dynamics, ``(M_pi, H, m)``.

    The gait stays at the observation's gait along these rollouts.
    """
    x = np.repeat(o.flatten()[None, :], cfg.policy_samples, axis=0)
    acts = np.empty((cfg.policy_samples, cfg.horizon, cfg.action_dim))
    for k in range(cfg.horizon):
        a = clamp_action(bundle.policy.predict(x))
        acts[:, k] = a
        x = bundle.dynamics.predict(x, a)
        if not np.all(np.isfinite(x)):
            raise ModelDivergenceError(f"dynamics diverged at policy rollout step {k}")
    return acts


def warm_start(bundle: ModelBundle, o: Observation, state: PlannerState,
               cfg: PlannerConfig) -> ProposalDistribution:
    """Initial proposal for this control step."""
    m = cfg.action_dim
    shifted = shift_distribution(state.prev_distribution, cfg) if state.prev_distribution else None
    try:
        acts = policy_rollouts(bundle, o.with_gait(state.g_cmd_prev), cfg)
    except ModelDivergenceError as exc:
        if shifted is None:
            raise
        log.warning("warm start fell back to the shifted previous distribution: %s", exc)
        return shifted
    mu = np.empty((cfg.horizon, cfg.width))
    sigma = np.empty_like(mu)
    mu[:, :m] = acts.mean(axis=0)
    sigma[:, :m] = acts.std(axis=0)
    if shifted is not None:
        b = cfg.warm_blend
        mu[:, :m] = b * mu[:, :m] + (1.0 - b) * shifted.mu[:, :m]
        sigma[:, :m] = b * sigma[:, :m] + (1.0 - b) * shifted.sigma[:, :m]
    g_prev = state.g_cmd_prev.as_array()
    mu[:, m:] = g_prev
    sigma[:, m:] = cfg.gait_std
    if shifted is not None and cfg.carry_gait_plan:
        # the executed gait is the wrapped first mean; undo that integer shift
        prev_first = state.prev_distribution.mu[0, m:]
        planned = shifted.mu[:, m:] - np.round(prev_first - g_prev)
        c = cfg.gait_carry
        mu[:, m:] = g_prev + c * (planned - g_prev)
        sigma[:, m:] = cfg.gait_std + c * (shifted.sigma[:, m:] - cfg.gait_std)
    return ProposalDistribution(mu, _floored(sigma, cfg))


def evaluate_batch(bundle: ModelBundle, o_flat: np.ndarray, actions: np.ndarray,
                   gaits: np.ndarray, g_prev: np.ndarray, a_cloned: np.ndarray,
                   cfg: PlannerConfig) -> np.ndarray:
    """Returns of ``B`` trajectories; ``actions`` is ``(B, H, m)``, ``gaits`` ``(B, H, 3)`` wrapped.

    Non-finite model outputs score ``-inf``.
    """
    B, H = actions.shape[:2]
    w = cfg.weights.alpha
    x = np.repeat(o_flat[None, :], B, axis=0)
    # gait-continuity penalty, undiscounted, k = 0 measured against g_prev
    prev = np.concatenate([np.broadcast_to(g_prev, (B, 1, GAIT_DIM)), gaits[:, :-1]], axis=1)
    d = np.abs(gaits - prev)
    d = np.minimum(d, 1.0 - d)
    ret = -cfg.lambda_gait * np.sum(d * d, axis=(1, 2))
    with np.errstate(all="ignore"):
        ret -= w[4] * np.sum((actions[:, 0] - a_cloned) ** 2, axis=-1)
        for k in range(H):
            x[:, GAIT] = gaits[:, k]
            ret += cfg.gamma**k * bundle.reward.predict(x, actions[:, k])
            x = bundle.dynamics.predict(x, actions[:, k])
        x[:, GAIT] = gaits[:, H - 1]
        ret += cfg.gamma**H * bundle.value.predict(x)
    ret[~np.isfinite(ret)] = -np.inf
    return ret


def evaluate_trajectory(bundle: ModelBundle, o: Observation, actions, gaits,
                        state: PlannerState, cfg: PlannerConfig) -> float:
    """Score one (actions ``(H, m)``, gaits ``(H, 3)``) trajectory from ``o``."""
    actions = clamp_action(np.asarray(actions, dtype=float).reshape(-1, cfg.action_dim))
    g = wrap_array(np.asarray([getattr(x, "offsets", x) for x in gaits], dtype=float))
    a_cloned = clamp_action(bundle.policy.predict(o.flatten()[None, :]))[0]
    return float(evaluate_batch(bundle, o.flatten(), actions[None], g[None],
                                state.g_cmd_prev.as_array(), a_cloned, cfg)[0])


def fit_elites(samples: np.ndarray, returns: np.ndarray, cfg: PlannerConfig):
    """Mean/std of the top elites, exponentially weighted by return if configured."""
    finite = np.flatnonzero(np.isfinite(returns))
    order = finite[np.argsort(-returns[finite], kind="stable")]
    elite_idx = order[: cfg.elites]
    elite = samples[elite_idx]
    r = returns[elite_idx]
    if cfg.weighted_elites:
        wts = np.exp((r - r.max()) / cfg.temperature)
    else:
        wts = np.ones_like(r)
    wts = wts / wts.sum()
    # anchored on the best elite so identical elites give that row exactly
    mu = elite[0] + np.tensordot(wts, elite - elite[0], axes=1)
    var = np.tensordot(wts, (elite - mu) ** 2, axes=1)
    return mu, np.sqrt(var), elite_idx


def plan(bundle: ModelBundle, o: Observation, state: PlannerState, cfg: PlannerConfig,
         seed: int = 0):
    """One control step.  Returns ``(action, gait, new_state)``."""
    m = cfg.action_dim
    H = cfg.horizon
    dist = warm_start(bundle, o, state, cfg)
    o_flat = o.flatten()
    g_prev = state.g_cmd_prev.as_array()
    a_cloned = clamp_action(bundle.policy.predict(o_flat[None, :]))[0]

    pol = None
    if cfg.policy_candidates:
        try:
            pol_actions = policy_rollouts(bundle, o.with_gait(state.g_cmd_prev), cfg)
            pol = np.concatenate(
                [pol_actions, np.broadcast_to(g_prev, (cfg.policy_samples, H, GAIT_DIM))], axis=-1)
        except ModelDivergenceError:
            pol = None

    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    mu, sigma = dist.mu, dist.sigma
    best_history = []
    carried = None
    try:
        for it in range(cfg.iterations):
            key = philox_key(seed, state.step_index, it)
            noise = block_normals(key, cfg.samples, cfg.block_size, (H, cfg.width))
            raw = mu[None] + sigma[None] * noise
            raw[..., :m] = clamp_action(raw[..., :m])
            extra = [x for x in (pol, carried) if x is not None]
            if extra:
                raw = np.concatenate([raw, *extra], axis=0)
            acts = raw[..., :m]
            gaits = wrap_array(raw[..., m:])

            def score(sl: slice) -> np.ndarray:
                return evaluate_batch(bundle, o_flat, acts[sl], gaits[sl], g_prev, a_cloned, cfg)

            # fixed evaluation blocks keep results independent of the worker count
            n_rows = len(raw)
            slices = [slice(b, min(b + cfg.block_size, n_rows)) for b in range(0, n_rows, cfg.block_size)]
            parts = list(pool.map(score, slices)) if pool else [score(sl) for sl in slices]
            returns = np.concatenate(parts)
            if not np.any(np.isfinite(returns)):
                raise PlannerFailureError(
                    f"all {len(returns)} samples diverged at iteration {it}",
                    {"iteration": it, "step": state.step_index})
            mu_e, sigma_e, elite_idx = fit_elites(raw, returns, cfg)
            if cfg.carry_best:
                carried = raw[elite_idx[:1]]
            # beta * elite + (1 - beta) * previous, written as an increment
            mu = mu + cfg.momentum * (mu_e - mu)
            sigma = _floored(sigma + cfg.momentum * (sigma_e - sigma), cfg)
            best_history.append(float(returns[elite_idx[0]]))
    finally:
        if pool:
            pool.shutdown()

    final = ProposalDistribution(mu, sigma)
    first = mu[0].copy()
    if cfg.sample_output:
        key = philox_key(seed, state.step_index, cfg.iterations)
        first = first + sigma[0] * block_normals(key, 1, 1, (cfg.width,))[0]
    action = clamp_action(first[:m])
    gait = wrap(first[m:])
    elite_r = returns[elite_idx]
    diagnostics = {
        "best_return": best_history[-1],
        "best_per_iteration": best_history,
        "elite_spread": float(elite_r.max() - elite_r.min()),
        "gait_mean": tuple(float(x) for x in gait.offsets),
    }
    log.debug("plan step %d: %s", state.step_index, diagnostics)
    new_state = PlannerState(final, gait, state.step_index + 1, diagnostics)
    return action, gait, new_state


def elite_samples(raw: np.ndarray, returns: np.ndarray, cfg: PlannerConfig) -> list[TrajectorySample]:
    """Package the elite rows of a sample batch as :class:`TrajectorySample` records."""
    _, _, idx = fit_elites(raw, returns, cfg)
    m = cfg.action_dim
    out = []
    for j in idx:
        gaits = tuple(wrap(g) for g in raw[j, :, m:])
        out.append(TrajectorySample(clamp_action(raw[j, :, :m]), gaits, float(returns[j])))
    return out
