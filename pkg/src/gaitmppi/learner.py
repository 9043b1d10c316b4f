"""Learned planning models: transition datasets and small tanh MLP regressors.

The behaviour policy for data collection is the proportional speed
controller with Gaussian action noise.  Every ``gait_period`` steps a new
gait is drawn, half the time near a canonical gait and half the time
uniformly on the gait torus, so the learned heads see the whole gait space.

Four heads are trained, all on the same feature map of the observation
(angles enter as sine/cosine pairs so the models are continuous across
the 0/1 seam of the phase and gait offsets):

* dynamics: (obs, action) -> state increments, with the gait passed through
* reward:   (obs, action) -> model reward (the planner adds the gait and
  actor-divergence penalties itself)
* value:    obs -> discounted Monte-Carlo return
* policy:   obs -> noise-free behaviour action
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .env import SurrogateEnv, constant_profile
from .gait import CANONICAL_ARRAY, GaitCommand, InvalidInputError, wrap, wrap_array
from .models import (
    A_PREV,
    GAIT,
    OMEGA,
    PHASE,
    V,
    V_CMD,
    ModelBundle,
    ModelDivergenceError,
    ProportionalPolicy,
    SurrogateParams,
    clamp_action,
    obs_dim,
)
from .rewards import RewardWeights

log = logging.getLogger(__name__)

HEADS = ("dynamics", "reward", "value", "policy")


class TrainingFailureError(RuntimeError):
    def __init__(self, head: str, epoch: int, detail: str = "loss became non-finite"):
        super().__init__(f"training of {head!r} failed at epoch {epoch}: {detail}")
        self.head = head
        self.epoch = epoch


# --- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    reward: float
    mc_return: float
    cloned_target: np.ndarray


@dataclass(frozen=True)
class BehaviorSpec:
    """Exploration settings of the data-collection controller."""

    steps: int = 600
    action_noise: float = 0.2
    gait_period: int = 100
    canonical_fraction: float = 0.5
    gait_jitter: float = 0.05
    v_cmd_range: tuple[float, float] = (0.3, 2.2)
    v0_spread: float = 0.3
    resample_gait: bool = True


@dataclass
class TransitionDataset:
    """Column-stored transitions; iterating yields :class:`Transition` records."""

    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    reward: np.ndarray
    mc_return: np.ndarray
    cloned_target: np.ndarray
    episode: np.ndarray
    step: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)

    def __getitem__(self, i: int) -> Transition:
        return Transition(self.obs[i], self.action[i], self.next_obs[i], float(self.reward[i]),
                          float(self.mc_return[i]), self.cloned_target[i])

    def __iter__(self) -> Iterator[Transition]:
        return (self[i] for i in range(len(self)))

    @property
    def action_dim(self) -> int:
        return self.action.shape[1]

    def remaining(self) -> np.ndarray:
        """Steps left in each transition's episode after it (0 for the last one)."""
        last = np.zeros(len(self), dtype=int)
        for e in np.unique(self.episode):
            idx = np.flatnonzero(self.episode == e)
            last[idx] = self.step[idx].max()
        return last - self.step

    def with_returns(self, gamma: float) -> "TransitionDataset":
        return replace(self, mc_return=discounted_returns(self.reward, self.episode, gamma))

    def subset(self, idx) -> "TransitionDataset":
        return TransitionDataset(*(getattr(self, n)[idx] for n in _COLUMNS))


_COLUMNS = ("obs", "action", "next_obs", "reward", "mc_return", "cloned_target", "episode", "step")


def discounted_returns(reward: np.ndarray, episode: np.ndarray, gamma: float) -> np.ndarray:
    """Backward recursion ``G_t = r_t + gamma G_{t+1}``, restarting at 0 per episode."""
    out = np.empty(len(reward))
    g = 0.0
    for t in range(len(reward) - 1, -1, -1):
        if t == len(reward) - 1 or episode[t + 1] != episode[t]:
            g = 0.0
        g = reward[t] + gamma * g
        out[t] = g
    return out


def _draw_gait(rng: np.random.Generator, spec: BehaviorSpec) -> GaitCommand:
    if rng.random() < spec.canonical_fraction:
        base = CANONICAL_ARRAY[rng.integers(len(CANONICAL_ARRAY))]
        return wrap(base + rng.normal(0.0, spec.gait_jitter, 3))
    return wrap(rng.random(3))


def collect_dataset(params: SurrogateParams = SurrogateParams(),
                    weights: RewardWeights = RewardWeights(),
                    episodes: int = 50, seed: int = 0,
                    behavior: BehaviorSpec = BehaviorSpec(),
                    gamma: float = 0.99) -> TransitionDataset:
    """Roll the noisy behaviour controller through the surrogate environment."""
    if episodes < 1:
        raise InvalidInputError("need at least one episode")
    rng = np.random.default_rng(seed)
    policy = ProportionalPolicy(params)
    m = params.action_dim
    n = episodes * behavior.steps
    d = obs_dim(m)
    cols = dict(obs=np.empty((n, d)), action=np.empty((n, m)), next_obs=np.empty((n, d)),
                reward=np.empty(n), cloned_target=np.empty((n, m)),
                episode=np.empty(n, dtype=int), step=np.empty(n, dtype=int))
    row = 0
    for ep in range(episodes):
        v_cmd = float(rng.uniform(*behavior.v_cmd_range))
        v0 = float(np.clip(v_cmd + rng.normal(0.0, behavior.v0_spread), 0.0, params.v_max))
        env = SurrogateEnv(params, weights, constant_profile(v_cmd))
        gait = _draw_gait(rng, behavior)
        s = env.reset(v0, gait)
        for t in range(behavior.steps):
            if behavior.resample_gait and t > 0 and t % behavior.gait_period == 0:
                gait = _draw_gait(rng, behavior)
            x = s.obs.with_gait(gait).flatten()
            target = policy.predict(x[None, :])[0]
            noise = rng.normal(0.0, behavior.action_noise, m) if behavior.action_noise > 0 else 0.0
            a = clamp_action(target + noise)
            out = env.step(s, a, gait)
            b = out.reward
            cols["obs"][row] = x
            cols["action"][row] = a
            cols["next_obs"][row] = out.next.obs.flatten()
            # the planner adds the gait-continuity penalty itself
            cols["reward"][row] = b.total - weights.alpha[5] * b.r_gait
            cols["cloned_target"][row] = target
            cols["episode"][row] = ep
            cols["step"][row] = t
            row += 1
            s = out.next
    ds = TransitionDataset(mc_return=np.full(n, np.nan), **cols)
    return ds.with_returns(gamma)


def _field_names(action_dim: int) -> list[str]:
    obs = ["v", "omega", "phase", "v_cmd", "g1", "g2", "g3"] + [f"a_prev{i}" for i in range(action_dim)]
    act = [f"a{i}" for i in range(action_dim)]
    return (obs + act + [f"next_{c}" for c in obs] + ["reward", "mc_return"]
            + [f"cloned_a{i}" for i in range(action_dim)] + ["episode", "step"])


def save_dataset_csv(ds: TransitionDataset, path) -> None:
    names = _field_names(ds.action_dim)
    table = np.column_stack([ds.obs, ds.action, ds.next_obs, ds.reward, ds.mc_return,
                             ds.cloned_target, ds.episode, ds.step])
    np.savetxt(path, table, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def load_dataset_csv(path) -> TransitionDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    m = sum(1 for h in header if h.startswith("cloned_a"))
    if header != _field_names(m):
        raise InvalidInputError(f"unexpected dataset header in {path}")
    t = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = obs_dim(m)
    cuts = np.cumsum([d, m, d, 1, 1, m, 1])
    obs, act, nxt, rew, ret, clo, ep, st = np.split(t, cuts, axis=1)
    return TransitionDataset(obs, act, nxt, rew[:, 0], ret[:, 0], clo,
                             ep[:, 0].astype(int), st[:, 0].astype(int))


# --- regressor --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 128
    epochs: int = 60
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    validation_fraction: float = 0.1
    momentum: float = 0.9
    final_lr_fraction: float = 0.02

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning rate must be positive")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise InvalidInputError("validation fraction must be in (0, 0.5]")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidInputError("batch size and epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError("momentum must be in [0, 1)")


def _safe_std(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


@dataclass
class Regressor:
    """Fully connected tanh network with standardized inputs and outputs.

    Parameters live in one flat float64 vector laid out layer by layer,
    weights (row-major ``fan_in x fan_out``) then biases.
    """

    sizes: tuple[int, ...]
    params: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise InvalidInputError(f"bad layer sizes {self.sizes}")
        if self.params.shape != (param_count(self.sizes),):
            raise InvalidInputError("parameter vector does not match layer sizes")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def layers(self, params: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        p = self.params if params is None else params
        out, k = [], 0
        for fi, fo in zip(self.sizes, self.sizes[1:]):
            w = p[k:k + fi * fo].reshape(fi, fo)
            k += fi * fo
            out.append((w, p[k:k + fo]))
            k += fo
        return out

    def normalize_x(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_std

    def denormalize_x(self, xn):
        return xn * self.x_std + self.x_mean

    def normalize_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def denormalize_y(self, yn):
        return yn * self.y_std + self.y_mean

    def forward_normalized(self, xn: np.ndarray, params: np.ndarray | None = None) -> np.ndarray:
        h = xn
        layers = self.layers(params)
        for w, b in layers[:-1]:
            h = np.tanh(h @ w + b)
        w, b = layers[-1]
        return h @ w + b

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.denormalize_y(self.forward_normalized(self.normalize_x(x)))

    def loss_and_grad(self, xn: np.ndarray, yn: np.ndarray,
                      params: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Mean squared error over samples and outputs (normalized units) and its gradient."""
        layers = self.layers(params)
        acts = [xn]
        h = xn
        for w, b in layers[:-1]:
            h = np.tanh(h @ w + b)
            acts.append(h)
        w, b = layers[-1]
        err = h @ w + b - yn
        loss = float(np.mean(err * err))
        delta = 2.0 * err / err.size
        grads = []
        for li in range(len(layers) - 1, -1, -1):
            w, _ = layers[li]
            a = acts[li]
            grads.append((a.T @ delta, delta.sum(axis=0)))
            if li:
                delta = (delta @ w.T) * (1.0 - a * a)
        flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
        return loss, flat


def param_count(sizes: Sequence[int]) -> int:
    return int(sum((fi + 1) * fo for fi, fo in zip(sizes, sizes[1:])))


def init_regressor(sizes: Sequence[int], seed: int = 0, x=None, y=None) -> Regressor:
    """Glorot-uniform weights, zero biases; standardization fitted to ``x``/``y`` if given.

    Output columns whose targets in ``y`` are constant get zero weights.
    """
    sizes = tuple(int(s) for s in sizes)
    rng = np.random.default_rng(seed)
    parts = []
    for fi, fo in zip(sizes, sizes[1:]):
        lim = np.sqrt(6.0 / (fi + fo))
        parts += [rng.uniform(-lim, lim, fi * fo), np.zeros(fo)]
    x_mean = np.zeros(sizes[0]) if x is None else np.asarray(x, float).mean(axis=0)
    x_std = np.ones(sizes[0]) if x is None else _safe_std(np.asarray(x, float))
    y_mean = np.zeros(sizes[-1]) if y is None else np.asarray(y, float).mean(axis=0)
    y_std = np.ones(sizes[-1]) if y is None else _safe_std(np.asarray(y, float))
    if y is not None:
        # outputs with constant targets start, and stay, exactly at their mean
        flat = np.asarray(y, float).std(axis=0) <= 1e-12
        parts[-2] = parts[-2].reshape(sizes[-2], sizes[-1])
        parts[-2][:, flat] = 0.0
        parts[-2] = parts[-2].ravel()
    return Regressor(sizes, np.concatenate(parts), x_mean, x_std, y_mean, y_std)


def grad_check(reg: Regressor, x, y, epsilon: float = 1e-5, gradient=None,
               floor: float = 1e-8) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``gradient(reg, xn, yn)`` defaults to the regressor's own backprop.  The
    relative error of each parameter is ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidInputError("epsilon must be in [1e-7, 1e-3]")
    xn = reg.normalize_x(np.atleast_2d(x))
    yn = reg.normalize_y(np.asarray(y, dtype=float).reshape(len(xn), -1))
    if gradient is None:
        analytic = reg.loss_and_grad(xn, yn)[1]
    else:
        analytic = np.asarray(gradient(reg, xn, yn), dtype=float)
    p = reg.params.copy()
    numeric = np.empty_like(p)
    for i in range(p.size):
        old = p[i]
        p[i] = old + epsilon
        up = reg.loss_and_grad(xn, yn, p)[0]
        p[i] = old - epsilon
        down = reg.loss_and_grad(xn, yn, p)[0]
        p[i] = old
        numeric[i] = (up - down) / (2.0 * epsilon)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


@dataclass(frozen=True)
class FitReport:
    train_mse: float
    val_mse: float
    val_mse_normalized: float
    epochs: int
    loss_history: tuple[float, ...] = field(default=(), repr=False)


def fit_regressor(x, y, cfg: TrainConfig = TrainConfig(), name: str = "regressor"
                  ) -> tuple[Regressor, FitReport]:
    """Mini-batch SGD with heavy-ball momentum on the normalized MSE.

    The learning rate decays geometrically to ``final_lr_fraction`` of its
    initial value over the run.  Reported MSEs are in target units.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if len(x) == 0 or len(x) != len(y):
        raise InvalidInputError("need a non-empty dataset with matching inputs and targets")
    rng = np.random.default_rng(cfg.seed)
    n = len(x)
    perm = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if n > 1 else 0), n - 1)
    val_idx, tr_idx = (perm[:n_val], perm[n_val:]) if n_val else (perm, perm)
    reg = init_regressor((x.shape[1], *cfg.hidden, y.shape[1]), cfg.seed, x[tr_idx], y[tr_idx])
    xn, yn = reg.normalize_x(x), reg.normalize_y(y)
    p = reg.params.copy()
    vel = np.zeros_like(p)
    decay = cfg.final_lr_fraction ** (1.0 / max(cfg.epochs - 1, 1))
    history = []
    # overflow on the way to a divergence is reported as TrainingFailureError
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            lr = cfg.learning_rate * decay**epoch
            order = tr_idx[rng.permutation(len(tr_idx))]
            total = 0.0
            for start in range(0, len(order), cfg.batch_size):
                b = order[start:start + cfg.batch_size]
                loss, g = reg.loss_and_grad(xn[b], yn[b], p)
                if not np.isfinite(loss):
                    raise TrainingFailureError(name, epoch)
                vel = cfg.momentum * vel - lr * g
                p += vel
                total += loss * len(b)
            history.append(total / len(order))
            if not np.all(np.isfinite(p)):
                raise TrainingFailureError(name, epoch, "parameters became non-finite")
    reg = replace(reg, params=p)

    def mse(idx):
        return float(np.mean((reg.predict(x[idx]) - y[idx]) ** 2))

    val_n = float(np.mean((reg.forward_normalized(xn[val_idx]) - yn[val_idx]) ** 2))
    report = FitReport(mse(tr_idx), mse(val_idx), val_n, cfg.epochs, tuple(history))
    log.info("%s: train mse %.3g, validation mse %.3g", name, report.train_mse, report.val_mse)
    return reg, report


# --- model files ------------------------------------------------------------

_MAGIC = b"GMLP\x00\x01\x00\x00"


def save_regressor(reg: Regressor, path) -> None:
    """Header: magic, layer count, layer sizes (uint32).  Body: float64 values.

    Body order: input mean, input std, output mean, output std, parameters.
    All little-endian.
    """
    header = _MAGIC + struct.pack(f"<I{len(reg.sizes)}I", len(reg.sizes), *reg.sizes)
    body = np.concatenate([reg.x_mean, reg.x_std, reg.y_mean, reg.y_std, reg.params])
    Path(path).write_bytes(header + body.astype("<f8").tobytes())


def load_regressor(path) -> Regressor:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise InvalidInputError(f"{path} is not a model file")
    (count,) = struct.unpack_from("<I", raw, 8)
    sizes = struct.unpack_from(f"<{count}I", raw, 12)
    body = np.frombuffer(raw, dtype="<f8", offset=12 + 4 * count).astype(float)
    n_in, n_out = sizes[0], sizes[-1]
    expect = 2 * n_in + 2 * n_out + param_count(sizes)
    if body.size != expect:
        raise InvalidInputError(f"{path}: expected {expect} values, found {body.size}")
    cuts = np.cumsum([n_in, n_in, n_out, n_out])
    xm, xs, ym, ys, p = np.split(body, cuts)
    return Regressor(sizes, p, xm, xs, ym, ys)


# --- learned model wrappers -------------------------------------------------

def observation_features(obs: np.ndarray) -> np.ndarray:
    """Speed, yaw rate, command and previous action plus sin/cos of every angle."""
    x = np.asarray(obs, dtype=float)
    angles = 2.0 * np.pi * np.concatenate([x[..., PHASE:PHASE + 1], x[..., GAIT]], axis=-1)
    return np.concatenate([x[..., [V, OMEGA, V_CMD]], x[..., A_PREV:],
                           np.sin(angles), np.cos(angles)], axis=-1)


def feature_dim(action_dim: int) -> int:
    return 3 + action_dim + 8


def _state_targets(obs: np.ndarray, next_obs: np.ndarray) -> np.ndarray:
    """Increments of speed, yaw rate, phase (wrapped to [-1/2, 1/2)) and previous action."""
    dphase = np.mod(next_obs[:, PHASE] - obs[:, PHASE] + 0.5, 1.0) - 0.5
    return np.column_stack([next_obs[:, V] - obs[:, V], next_obs[:, OMEGA] - obs[:, OMEGA],
                            dphase, next_obs[:, A_PREV:] - obs[:, A_PREV:]])


def _guard(out: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise ModelDivergenceError(f"learned {what} produced a non-finite output")
    return out


@dataclass(frozen=True)
class LearnedDynamics:
    """Predicts state increments; the command and gait pass through unchanged."""

    regressor: Regressor
    v_max: float = SurrogateParams.v_max

    @property
    def action_dim(self) -> int:
        return self.regressor.n_out - 3

    def predict(self, obs, actions) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        a = clamp_action(actions)
        d = _guard(self.regressor.predict(np.concatenate([observation_features(x), a], axis=-1)),
                   "dynamics")
        nxt = x.copy()
        nxt[..., V] = np.clip(x[..., V] + d[..., 0], 0.0, self.v_max)
        nxt[..., OMEGA] = x[..., OMEGA] + d[..., 1]
        nxt[..., PHASE] = wrap_array(x[..., PHASE] + d[..., 2])
        nxt[..., A_PREV:] = x[..., A_PREV:] + d[..., 3:]
        return nxt


@dataclass(frozen=True)
class LearnedReward:
    regressor: Regressor

    @property
    def action_dim(self) -> int:
        # inputs are feature_dim(m) + m
        return (self.regressor.n_in - feature_dim(0)) // 2

    def predict(self, obs, actions) -> np.ndarray:
        x = np.concatenate([observation_features(obs), clamp_action(actions)], axis=-1)
        return _guard(self.regressor.predict(x)[..., 0], "reward")


@dataclass(frozen=True)
class LearnedValue:
    regressor: Regressor

    @property
    def action_dim(self) -> int:
        return self.regressor.n_in - feature_dim(0)

    def predict(self, obs) -> np.ndarray:
        return _guard(self.regressor.predict(observation_features(obs))[..., 0], "value")


@dataclass(frozen=True)
class LearnedPolicy:
    regressor: Regressor

    @property
    def action_dim(self) -> int:
        return self.regressor.n_out

    def predict(self, obs) -> np.ndarray:
        return clamp_action(_guard(self.regressor.predict(observation_features(obs)), "policy"))


# --- bundle training --------------------------------------------------------

@dataclass(frozen=True)
class BundleTrainConfig:
    """Per-head training settings plus the value-target tail trim.

    Value targets are only used where at least ``value_min_remaining``
    steps of the episode follow, so the truncated Monte-Carlo sum is within
    ``gamma**value_min_remaining`` (relative) of the infinite-horizon return.
    """

    dynamics: TrainConfig = TrainConfig()
    reward: TrainConfig = TrainConfig(epochs=200)
    value: TrainConfig = TrainConfig(epochs=200)
    policy: TrainConfig = TrainConfig()
    value_min_remaining: int = 460

    def head(self, name: str) -> TrainConfig:
        return getattr(self, name)


@dataclass(frozen=True)
class BundleReport:
    heads: dict
    dynamics_normalized_mse: float
    policy_max_error: float

    def summary(self) -> dict[str, float]:
        out = {f"{h}_val_mse": r.val_mse for h, r in self.heads.items()}
        out["dynamics_normalized_mse"] = self.dynamics_normalized_mse
        out["policy_max_error"] = self.policy_max_error
        return out


def _fit_head(name, x, y, cfg):
    try:
        return fit_regressor(x, y, cfg, name)
    except TrainingFailureError:
        raise
    except Exception as exc:
        raise TrainingFailureError(name, -1, str(exc)) from exc


def _validation_rows(n: int, cfg: TrainConfig) -> np.ndarray:
    """The rows :func:`fit_regressor` holds out for validation under ``cfg``."""
    perm = np.random.default_rng(cfg.seed).permutation(n)
    n_val = min(max(int(round(cfg.validation_fraction * n)), 1), n - 1) if n > 1 else 0
    return perm[:n_val] if n_val else perm


def train_bundle(ds: TransitionDataset, cfg: BundleTrainConfig = BundleTrainConfig(),
                 gamma: float = 0.99, params: SurrogateParams = SurrogateParams()
                 ) -> tuple[ModelBundle, BundleReport]:
    """Fit the four heads and wrap them as planning models."""
    if len(ds) == 0 or not np.all(np.isfinite(ds.mc_return)):
        raise InvalidInputError("dataset needs Monte-Carlo returns before training")
    feats = observation_features(ds.obs)
    sa = np.concatenate([feats, ds.action], axis=1)
    dyn_y = _state_targets(ds.obs, ds.next_obs)
    keep = ds.remaining() >= cfg.value_min_remaining
    if not np.any(keep):
        raise TrainingFailureError("value", -1, "no transitions survive the tail trim; use longer episodes")

    dyn, dyn_r = _fit_head("dynamics", sa, dyn_y, cfg.dynamics)
    rew, rew_r = _fit_head("reward", sa, ds.reward, cfg.reward)
    val, val_r = _fit_head("value", feats[keep], ds.mc_return[keep], cfg.value)
    pol, pol_r = _fit_head("policy", feats, ds.cloned_target, cfg.policy)

    dynamics = LearnedDynamics(dyn, params.v_max)
    vrows = _validation_rows(len(ds), cfg.dynamics)
    pred = dynamics.predict(ds.obs[vrows], ds.action[vrows])
    truth = ds.next_obs[vrows]
    cols = np.r_[V, OMEGA, PHASE, np.arange(A_PREV, ds.obs.shape[1])]
    scale = _safe_std(ds.next_obs[:, cols])
    err = pred[:, cols] - truth[:, cols]
    err[:, 2] = np.mod(err[:, 2] + 0.5, 1.0) - 0.5
    dyn_nmse = float(np.mean((err / scale) ** 2))

    prow = _validation_rows(len(ds), cfg.policy)
    policy = LearnedPolicy(pol)
    pol_err = float(np.max(np.abs(policy.predict(ds.obs[prow]) - ds.cloned_target[prow])))

    report = BundleReport({"dynamics": dyn_r, "reward": rew_r, "value": val_r, "policy": pol_r},
                          dyn_nmse, pol_err)
    bundle = ModelBundle(dynamics, LearnedReward(rew), LearnedValue(val), policy,
                         notes=report.summary())
    return bundle, report


def save_bundle(bundle: ModelBundle, directory) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in HEADS:
        model = getattr(bundle, name)
        if not hasattr(model, "regressor"):
            raise InvalidInputError(f"{name} head is not a learned model")
        paths[name] = d / f"{name}.gmlp"
        save_regressor(model.regressor, paths[name])
    return paths


def load_bundle(directory, params: SurrogateParams = SurrogateParams()) -> ModelBundle:
    d = Path(directory)
    r = {name: load_regressor(d / f"{name}.gmlp") for name in HEADS}
    return ModelBundle(LearnedDynamics(r["dynamics"], params.v_max), LearnedReward(r["reward"]),
                       LearnedValue(r["value"]), LearnedPolicy(r["policy"]))
