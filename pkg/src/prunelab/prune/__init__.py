"""Saliency scores, density schedules, mask updates and pruning pipelines."""

from .masks import PruneReport, apply_prune, detect_layer_collapse, layer_densities, lowest_k, make_report
from .pipelines import (
    PruneMethod,
    compute_scores,
    drive_pipeline,
    imp_pipeline,
    iterative_prune,
    snip_pipeline,
    synflow_pipeline,
)
from .schedule import SparsitySchedule, make_schedule, survivor_target
from .scores import (
    ScoreVector,
    connection_sensitivity_exact,
    convergence_sensitivity,
    drive_metric,
    score_drive,
    score_magnitude,
    score_snip,
    score_synflow,
    snip_saliency,
    synflow_saliency,
)

__all__ = [
    "PruneMethod", "PruneReport", "ScoreVector", "SparsitySchedule",
    "apply_prune", "compute_scores", "connection_sensitivity_exact", "convergence_sensitivity",
    "detect_layer_collapse", "drive_metric", "drive_pipeline", "imp_pipeline", "iterative_prune",
    "layer_densities", "lowest_k", "make_report", "make_schedule", "score_drive", "score_magnitude",
    "score_snip", "score_synflow", "snip_pipeline", "snip_saliency", "survivor_target",
    "synflow_pipeline", "synflow_saliency",
]
