"""Panoptic scoring of an instance matching, and the per-class driver.

Undefined metric values (e.g. SQ with zero true positives, or everything on
an empty-vs-empty comparison) are reported as None rather than 0 or 1, so
cohort averages are not silently inflated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..volume import Volume
from .instances import DEFAULT_CONNECTIVITY, InstanceMap, connected_components
from .matching import MatchResult, match_instances, overlap_table
from .metrics import assd, cl_dice, dice, iou


@dataclass(frozen=True)
class EvalOptions:
    threshold: float = 0.5
    connectivity: int | None = None  # None: 26 for 3D, 8 for 2D
    surface: bool = False  # per-pair ASSD
    centerline: bool = False  # global clDice
    matching: str = "greedy"


@dataclass(frozen=True)
class PairMetrics:
    pred: int
    ref: int
    iou: float
    dice: float
    assd_mm: float | None = None


@dataclass(frozen=True)
class PanopticReport:
    tp: int
    fp: int
    fn: int
    rq: float | None
    sq: float | None
    pq: float | None
    per_pair: tuple[PairMetrics, ...]
    global_dice: float | None = None
    global_iou: float | None = None
    cl_dice: float | None = None

    def __post_init__(self):
        if self.tp != len(self.per_pair):
            raise ValueError("tp must equal the number of matched pairs")
        if self.rq is not None and self.sq is not None and self.pq is not None:
            if abs(self.pq - self.rq * self.sq) > 1e-12:
                raise ValueError("pq must equal rq * sq")


def evaluate_panoptic(
    match: MatchResult,
    pred: InstanceMap,
    ref: InstanceMap,
    opts: EvalOptions | None = None,
) -> PanopticReport:
    """Score a match: RQ = tp/(tp + fp/2 + fn/2), SQ = mean matched IoU, PQ = RQ*SQ."""
    opts = opts or EvalOptions()
    tp = len(match.pairs)
    fp = len(match.unmatched_pred)
    fn = len(match.unmatched_ref)

    if tp + fp + fn == 0:
        rq = sq = pq = None
    else:
        rq = tp / (tp + 0.5 * fp + 0.5 * fn)
        # fsum: exactly rounded, so SQ is invariant to pair ordering
        sq = math.fsum(i for _, _, i in match.pairs) / tp if tp > 0 else None
        pq = rq * sq if sq is not None else None

    table = overlap_table(pred, ref)
    pvol, rvol = table["pred_volumes"], table["ref_volumes"]
    inter = table["intersections"]
    per_pair = []
    for pl, rl, pair_iou in match.pairs:
        i = inter[(pl, rl)]
        pair_dice = 2.0 * i / float(pvol[pl] + rvol[rl])
        pair_assd = None
        if opts.surface:
            pair_assd = assd(pred.labels == pl, ref.labels == rl, pred.spacing)
        per_pair.append(PairMetrics(int(pl), int(rl), float(pair_iou), pair_dice, pair_assd))

    fg_pred = pred.labels > 0
    fg_ref = ref.labels > 0
    any_fg = bool(fg_pred.any() or fg_ref.any())
    global_dice = dice(fg_pred, fg_ref) if any_fg else None
    global_iou = iou(fg_pred, fg_ref) if any_fg else None
    cld = None
    if opts.centerline and fg_pred.any() and fg_ref.any():
        cld = cl_dice(fg_pred, fg_ref)

    return PanopticReport(
        tp, fp, fn, rq, sq, pq, tuple(per_pair), global_dice, global_iou, cld
    )


@dataclass(frozen=True)
class EvaluationReport:
    """Per-class panoptic reports plus their macro-average."""

    classes: dict
    macro: dict
    options: EvalOptions
    subject: str | None = None

    def class_report(self, label: int) -> PanopticReport:
        return self.classes[label]


def _effective_array(v: Volume) -> tuple[np.ndarray, tuple[float, ...]]:
    """Squeeze singleton axes so 2D slices get 2D semantics end-to-end."""
    arr = np.asarray(v.data)
    spacing = v.spacing
    keep = [i for i, d in enumerate(arr.shape) if d > 1]
    if len(keep) == 2:
        arr = arr.reshape([arr.shape[i] for i in keep])
        spacing = tuple(spacing[i] for i in keep)
    return arr, spacing


def evaluate_semantic_pair(
    pred: Volume, ref: Volume, opts: EvalOptions | None = None
) -> EvaluationReport:
    """Per-class instance evaluation of two semantic label volumes.

    Each class present in either input is binarized, split into instances,
    matched and scored; the macro average runs over classes with defined
    values.
    """
    opts = opts or EvalOptions()
    if pred.dims != ref.dims:
        raise ValueError(f"volume dims differ: {pred.dims} vs {ref.dims}")
    pred_arr, spacing = _effective_array(pred)
    ref_arr, _ = _effective_array(ref)
    conn = opts.connectivity or DEFAULT_CONNECTIVITY[pred_arr.ndim]

    labels = np.union1d(np.unique(pred_arr), np.unique(ref_arr))
    labels = [int(v) for v in labels if v > 0]
    if not labels:
        labels = [1]

    classes = {}
    for cls in labels:
        p_inst = connected_components(pred_arr == cls, conn, spacing)
        r_inst = connected_components(ref_arr == cls, conn, spacing)
        match = match_instances(p_inst, r_inst, opts.threshold, opts.matching)
        classes[cls] = evaluate_panoptic(match, p_inst, r_inst, opts)

    macro = {}
    for key in ("rq", "sq", "pq", "global_dice", "global_iou", "cl_dice"):
        vals = [getattr(r, key) for r in classes.values() if getattr(r, key) is not None]
        macro[key] = math.fsum(vals) / len(vals) if vals else None
    return EvaluationReport(classes, macro, opts)
