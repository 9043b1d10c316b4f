"""Joint action and gait planning for legged locomotion on a calibrated surrogate."""
from .gait import (
    BOUND,
    CANONICAL_GAITS,
    PACE,
    PRONK,
    TROT,
    ContactState,
    GaitCommand,
    InvalidInputError,
    canonical_weights,
    contact_schedule,
    foot_offsets,
    gait_distance,
    gait_distance_sq,
    wrap,
)
from .models import ModelBundle, Observation, SurrogateParams, analytic_bundle, power_model
from .planner import PlannerConfig, PlannerState, plan
from .rewards import RewardWeights, cost_of_transport

__all__ = [
    "BOUND", "CANONICAL_GAITS", "PACE", "PRONK", "TROT", "ContactState", "GaitCommand",
    "InvalidInputError", "ModelBundle", "Observation", "PlannerConfig", "PlannerState",
    "RewardWeights", "SurrogateParams", "analytic_bundle", "canonical_weights",
    "contact_schedule", "cost_of_transport", "foot_offsets", "gait_distance",
    "gait_distance_sq", "plan", "power_model", "wrap",
]
