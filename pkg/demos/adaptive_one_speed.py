"""Let the planner pick the gait at a single speed.

The episode starts in trot at 2 m/s, where pronk is cheaper. The planner
samples action and gait sequences together, so it can drift the gait toward
pronk while it keeps tracking the speed command.

    python demos/adaptive_one_speed.py
"""
import numpy as np

from gaitmppi.config import ExperimentConfig
from gaitmppi.gait import TROT
from gaitmppi.harness import PlannerController, constant_speed_episode, final_second_distances
from gaitmppi.models import analytic_bundle

cfg = ExperimentConfig()
bundle = analytic_bundle(cfg.env, cfg.reward, cfg.planner.gamma)
controller = PlannerController(bundle, cfg.planner, seed=0)

trace = constant_speed_episode(cfg, controller, v_cmd=2.0, gait0=TROT)
log = trace.arrays()

for k in range(0, len(trace), 25):
    print(f"t = {log['time'][k]:4.1f} s  gait {np.round(log['gait'][k], 3)}  v = {log['v'][k]:.3f}")

print("distance to each canonical gait over the last second:")
for name, d in sorted(final_second_distances(trace).items(), key=lambda kv: kv[1]):
    print(f"  {name:>5} {d:.3f}")
print(f"cost of transport {trace.cot():.3f} (fixed trot 1.16, fixed pronk 1.08)")
