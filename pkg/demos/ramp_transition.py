"""Speed ramp from 0.5 to 2 m/s with the gait chosen online.

Watch the gait move from trot to pronk as the speed rises. The gait step per
control tick stays small, so the transition is smooth rather than a jump.
Writes a contact diagram to runs/demo_ramp/ramp_contacts.csv.

    python demos/ramp_transition.py
"""
from gaitmppi.config import ExperimentConfig
from gaitmppi.harness import OutputWriter, run_ramp

cfg = ExperimentConfig()
result = run_ramp(cfg, OutputWriter("runs/demo_ramp"))

for key, value in result.summary().items():
    print(f"{key:>22} {value:.4f}")
