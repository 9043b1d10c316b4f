"""Experiment configuration: a flat ``section.key = value`` text format.

Every key maps onto a field of one of the dataclasses below, and the value
is parsed with that field's default type.  Unknown keys are errors.  A
dumped config loads back to an equal object, so a run can be repeated
from the ``config.txt`` it leaves in its output directory.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .env import CommandProfile
from .gait import InvalidInputError
from .learner import BehaviorSpec, BundleTrainConfig, TrainConfig
from .models import SurrogateParams
from .planner import PlannerConfig
from .rewards import RewardWeights

KINDS = ("ablation", "adaptive", "ramp", "train", "oracle-check")


class ConfigError(InvalidInputError):
    pass


@dataclass(frozen=True)
class ExperimentSettings:
    kind: str = "adaptive"
    seed: int = 0
    out: str = "runs/out"
    speeds: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    episode_seconds: float = 5.0
    transient: float = 1.0
    # start each constant-speed episode at its commanded speed
    start_at_command: bool = True


@dataclass(frozen=True)
class RampSettings:
    v_start: float = 0.5
    v_end: float = 2.0
    duration: float = 20.0
    hold: float = 5.0

    def profile(self) -> CommandProfile:
        if self.v_start == self.v_end:
            return CommandProfile(((0.0, self.v_start),))
        return CommandProfile(((0.0, self.v_start), (self.duration, self.v_end)))

    @property
    def total_seconds(self) -> float:
        return self.duration + self.hold


@dataclass(frozen=True)
class TrainSettings:
    episodes: int = 50
    steps: int = 600
    action_noise: float = 0.2
    gait_period: int = 100
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 0.05
    batch_size: int = 128
    epochs: int = 60
    reward_epochs: int = 200
    value_epochs: int = 200
    value_min_remaining: int = 460
    eval_seconds: float = 5.0

    def behavior(self) -> BehaviorSpec:
        return BehaviorSpec(steps=self.steps, action_noise=self.action_noise,
                            gait_period=self.gait_period)

    def bundle_config(self, seed: int) -> BundleTrainConfig:
        def head(epochs):
            return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                               epochs=epochs, seed=seed, hidden=tuple(self.hidden))
        return BundleTrainConfig(dynamics=head(self.epochs), reward=head(self.reward_epochs),
                                 value=head(self.value_epochs), policy=head(self.epochs),
                                 value_min_remaining=self.value_min_remaining)


# planner keys that are owned by other sections
_PLANNER_SKIP = {"weights", "action_dim"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    env: SurrogateParams = field(default_factory=SurrogateParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    ramp: RampSettings = field(default_factory=RampSettings)
    train: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self):
        if self.experiment.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.experiment.kind!r}; expected one of {KINDS}")
        # the planner always uses the configured reward weights and action size
        planner = replace(self.planner, weights=self.reward, action_dim=self.env.action_dim)
        object.__setattr__(self, "planner", planner)

    @property
    def seed(self) -> int:
        return self.experiment.seed

    def with_overrides(self, kind=None, seed=None, out=None) -> "ExperimentConfig":
        e = self.experiment
        e = replace(e, kind=kind if kind is not None else e.kind,
                    seed=seed if seed is not None else e.seed,
                    out=str(out) if out is not None else e.out)
        return replace(self, experiment=e)


_SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _keys(section: str, obj) -> list[str]:
    names = [f.name for f in fields(obj)]
    if section == "planner":
        names = [n for n in names if n not in _PLANNER_SKIP]
    return names


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(x) for x in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``section.key = value`` lines on top of ``base`` (defaults if omitted)."""
    cfg = base or ExperimentConfig()
    updates: dict[str, dict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        current = getattr(cfg, section)
        if name not in _keys(section, current):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = _parse_value(value, getattr(current, name), key)
    try:
        for section, vals in updates.items():
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **vals)})
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for name in _keys(section, obj):
            lines.append(f"{section}.{name} = {_format_value(getattr(obj, name))}")
        lines.append("")
    return "\n".join(lines)
