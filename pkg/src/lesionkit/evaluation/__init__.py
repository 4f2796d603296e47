"""Instance-wise segmentation evaluation.

Three steps: extract instances from semantic masks (connected components),
match predicted to reference instances by spatial overlap, then score the
matching with panoptic, overlap and surface metrics.
"""

from .instances import InstanceMap, connected_components
from .matching import MatchResult, match_instances
from .metrics import assd, cl_dice, dice, iou
from .panoptic import (
    EvalOptions,
    EvaluationReport,
    PairMetrics,
    PanopticReport,
    evaluate_panoptic,
    evaluate_semantic_pair,
)
from .report import read_report, write_report

__all__ = [
    "EvalOptions",
    "EvaluationReport",
    "InstanceMap",
    "MatchResult",
    "PairMetrics",
    "PanopticReport",
    "assd",
    "cl_dice",
    "connected_components",
    "dice",
    "evaluate_panoptic",
    "evaluate_semantic_pair",
    "iou",
    "match_instances",
    "read_report",
    "write_report",
]
