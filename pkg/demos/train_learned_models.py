"""Fit the learned model bundle and plan with it.

Collects episodes from a noisy proportional controller with resampled gaits,
fits the dynamics, reward, value and policy heads, then plans at two speeds
with the learned bundle. The learned planner is noisier than the one with the
true models, but it should still beat the worst fixed gait.

    python demos/train_learned_models.py
"""
from gaitmppi.config import ExperimentConfig
from gaitmppi.gait import TROT
from gaitmppi.harness import PlannerController, constant_speed_episode
from gaitmppi.learner import collect_dataset, train_bundle

cfg = ExperimentConfig()
data = collect_dataset(episodes=50, seed=0)
bundle, report = train_bundle(data)

for head, r in report.heads.items():
    print(f"{head:>9} validation mse {r.val_mse:.3g}")
print(f"dynamics normalized mse {report.dynamics_normalized_mse:.2e}")
print(f"policy max error {report.policy_max_error:.3f}")

for v in (0.5, 2.0):
    trace = constant_speed_episode(cfg, PlannerController(bundle, cfg.planner, seed=1), v, TROT)
    print(f"v = {v}: learned-model cost of transport {trace.cot():.3f}")
