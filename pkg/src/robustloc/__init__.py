"""Distributed cooperative localization robust to unidentified NLOS ranges."""
from .core import Network, build_topology, distance, neighbors
from .loss import LossKind, LossParams, link_cost, link_grad, network_cost, residual
from .measurement import MeasurementSet, NoiseModel, nlos_ratio, synthesize
from .solver import (EstimateState, Schedule, SolveTrace, StageConfig, choose_alpha2,
                     node_update, run_stage, solve_two_stage)

__all__ = [
    "Network", "build_topology", "distance", "neighbors",
    "LossKind", "LossParams", "link_cost", "link_grad", "network_cost", "residual",
    "MeasurementSet", "NoiseModel", "nlos_ratio", "synthesize",
    "EstimateState", "Schedule", "SolveTrace", "StageConfig", "choose_alpha2",
    "node_update", "run_stage", "solve_two_stage",
]
