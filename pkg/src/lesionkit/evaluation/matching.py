"""One-to-one instance matching by spatial overlap.

Numeric label values carry no identity: candidate pairs come from actual
voxel overlap, scored by IoU.  The contract algorithm is greedy selection in
descending IoU order (ties broken by smaller reference label, then smaller
prediction label); a globally optimal assignment is available behind
``strategy="optimal"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import InstanceMap


@dataclass(frozen=True)
class MatchResult:
    """Accepted (pred, ref, iou) pairs plus the leftovers on both sides."""

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_pred: tuple[int, ...]
    unmatched_ref: tuple[int, ...]
    threshold: float

    def __post_init__(self):
        preds = [p for p, _, _ in self.pairs]
        refs = [r for _, r, _ in self.pairs]
        if len(set(preds)) != len(preds) or len(set(refs)) != len(refs):
            raise ValueError("matching must be one-to-one")
        if any(i < self.threshold for _, _, i in self.pairs):
            raise ValueError("pair below the IoU threshold")


def overlap_table(pred: InstanceMap, ref: InstanceMap) -> dict:
    """One joint pass: per-label volumes and pairwise intersection counts."""
    if pred.labels.shape != ref.labels.shape:
        raise ValueError(
            f"instance maps differ in shape: {pred.labels.shape} vs {ref.labels.shape}"
        )
    p = pred.labels.ravel().astype(np.int64)
    r = ref.labels.ravel().astype(np.int64)
    pvol = np.bincount(p)
    rvol = np.bincount(r)
    both = (p > 0) & (r > 0)
    n_ref = rvol.size
    codes = p[both] * n_ref + r[both]
    counts = np.bincount(codes)
    inter = {}
    for code in np.nonzero(counts)[0]:
        inter[(int(code // n_ref), int(code % n_ref))] = int(counts[code])
    return {"pred_volumes": pvol, "ref_volumes": rvol, "intersections": inter}


def _candidates(table, threshold):
    pvol, rvol = table["pred_volumes"], table["ref_volumes"]
    out = []
    for (pl, rl), inter in table["intersections"].items():
        iou = inter / float(pvol[pl] + rvol[rl] - inter)
        if iou >= threshold:
            out.append((pl, rl, iou))
    # descending IoU; ties by smaller ref label, then smaller pred label
    out.sort(key=lambda c: (-c[2], c[1], c[0]))
    return out


def match_instances(
    pred: InstanceMap,
    ref: InstanceMap,
    threshold: float = 0.5,
    strategy: str = "greedy",
) -> MatchResult:
    """Match instances one-to-one subject to IoU >= ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if strategy not in ("greedy", "optimal"):
        raise ValueError(f"strategy must be 'greedy' or 'optimal', got {strategy!r}")
    table = overlap_table(pred, ref)
    candidates = _candidates(table, threshold)

    if strategy == "greedy":
        taken_p: set[int] = set()
        taken_r: set[int] = set()
        pairs = []
        for pl, rl, iou in candidates:
            if pl in taken_p or rl in taken_r:
                continue
            pairs.append((pl, rl, float(iou)))
            taken_p.add(pl)
            taken_r.add(rl)
    else:
        pairs = _optimal_assignment(candidates)

    matched_p = {p for p, _, _ in pairs}
    matched_r = {r for _, r, _ in pairs}
    unmatched_pred = tuple(int(v) for v in pred.label_values if v not in matched_p)
    unmatched_ref = tuple(int(v) for v in ref.label_values if v not in matched_r)
    return MatchResult(tuple(pairs), unmatched_pred, unmatched_ref, threshold)


def _optimal_assignment(candidates):
    """Maximum-total-IoU one-to-one assignment over the eligible pairs."""
    from scipy.optimize import linear_sum_assignment

    if not candidates:
        return []
    preds = sorted({p for p, _, _ in candidates})
    refs = sorted({r for _, r, _ in candidates})
    pi = {p: i for i, p in enumerate(preds)}
    ri = {r: i for i, r in enumerate(refs)}
    weights = np.zeros((len(preds), len(refs)))
    iou_map = {}
    for p, r, iou in candidates:
        weights[pi[p], ri[r]] = iou
        iou_map[(p, r)] = iou
    rows, cols = linear_sum_assignment(weights, maximize=True)
    pairs = []
    for i, j in zip(rows, cols):
        key = (preds[i], refs[j])
        if key in iou_map:
            pairs.append((key[0], key[1], float(iou_map[key])))
    pairs.sort(key=lambda c: (-c[2], c[1], c[0]))
    return pairs
