"""Cost of transport of the four fixed gaits across speeds.

Each gait is held fixed while a proportional controller tracks the speed
command. The table that comes out should match the calibration curves the
surrogate is built on, to within rounding.

    python demos/fixed_gait_ablation.py
"""
from gaitmppi.config import ExperimentConfig
from gaitmppi.gait import GAIT_NAMES
from gaitmppi.harness import run_ablation
from gaitmppi.models import COT_TABLE

cfg = ExperimentConfig()
table = run_ablation(cfg)

print("speed " + "".join(f"{v:>8.1f}" for v in table.speeds))
for name in GAIT_NAMES:
    measured = "".join(f"{c:8.3f}" for c in table.cot[name])
    print(f"{name:>5} {measured}")
    drift = max(abs(a - b) for a, b in zip(table.cot[name], COT_TABLE[name]))
    print(f"      largest drift from calibration: {drift:.1e}")

# the cheapest gait switches from trot at low speed to pronk at high speed
for i, v in enumerate(table.speeds):
    best = min(GAIT_NAMES, key=lambda n: table.cot[n][i])
    print(f"v = {v:.1f} m/s: cheapest fixed gait is {best}")
