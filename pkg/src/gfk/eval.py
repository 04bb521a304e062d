"""Detection metrics: IoU variants, AP at 40 recall positions, report assembly.

Matching is greedy in descending score order (ties keep input order): each
detection takes the unmatched ground-truth box of highest IoU at or above
the class threshold, IoU ties going to the lower gt index. Precision is
interpolated as p(r) = max precision at recall >= r and averaged over the 40
recall positions {1/40 .. 40/40}.

Results are split by distance: ground truth bins by true z, detections by
predicted z. A (class, kind, bin) cell with neither gts nor detections is
undefined (ap is None) and excluded from any aggregation.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .codec import read_predictions
from .geometry import convex_intersection_area
from .scene import Box2D, Box3D, read_labels

logger = logging.getLogger(__name__)

KINDS = ("2d", "bev", "3d")


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"Car": 0.2, "Pedestrian": 0.1}
    )
    bins: tuple[tuple[float, float], ...] = ((0.0, 30.0), (30.0, 50.0), (50.0, 80.0))
    n_recall: int = 40
    kinds: tuple[str, ...] = KINDS

    def __post_init__(self) -> None:
        for name, thr in self.iou_thresholds.items():
            if not (0.0 < thr <= 1.0):
                raise ValueError(f"IoU threshold for {name} must be in (0, 1], got {thr}")
        for lo, hi in self.bins:
            if not (0.0 <= lo < hi):
                raise ValueError(f"bad bin ({lo}, {hi})")
        if self.n_recall <= 0:
            raise ValueError("n_recall must be positive")
        for kind in self.kinds:
            if kind not in KINDS:
                raise ValueError(f"unknown metric kind {kind!r}")


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Axis-aligned IoU of two image boxes."""
    wi = min(a.u + a.w_u / 2, b.u + b.w_u / 2) - max(a.u - a.w_u / 2, b.u - b.w_u / 2)
    hi = min(a.v + a.h_v / 2, b.v + b.h_v / 2) - max(a.v - a.h_v / 2, b.v - b.h_v / 2)
    if wi <= 0 or hi <= 0:
        return 0.0
    inter = wi * hi
    return inter / (a.w_u * a.h_v + b.w_u * b.h_v - inter)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """IoU of the rotated footprints in the ground plane."""
    inter = convex_intersection_area(a.bev_corners(), b.bev_corners())
    union = a.w * a.l + b.w * b.l - inter
    return inter / union if union > 0 else 0.0


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection times vertical overlap of [y-h, y]."""
    inter_area = convex_intersection_area(a.bev_corners(), b.bev_corners())
    if inter_area == 0.0:
        return 0.0
    v_overlap = min(a.y, b.y) - max(a.y - a.h, b.y - b.h)
    if v_overlap <= 0:
        return 0.0
    inter = inter_area * v_overlap
    union = a.w * a.l * a.h + b.w * b.l * b.h - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class ApResult:
    ap: float | None      # None when the cell has neither gts nor dets
    n_gt: int
    n_det: int
    n_matched: int
    # (recall, precision) after each detection in score order
    pr_points: tuple[tuple[float, float], ...] = ()


def _greedy_match(dets, gts, iou_fn, threshold, det_frames, gt_frames):
    """True/false positive flags for dets in descending score order.

    Returns (order, tp_flags): order indexes into dets sorted by score.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)  # stable on ties
    taken = [False] * len(gts)
    tp = [False] * len(dets)
    for rank, di in enumerate(order):
        best_iou = 0.0
        best_j = -1
        for j in range(len(gts)):
            if taken[j] or det_frames[di] != gt_frames[j]:
                continue
            iou = iou_fn(dets[di], gts[j])
            if iou >= threshold and iou > best_iou:  # strict > keeps the lowest gt index on ties
                best_iou = iou
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            tp[rank] = True
    return order, tp


def ap_40(dets: Sequence, gts: Sequence, iou_fn: Callable, threshold: float,
          det_frames: Sequence | None = None, gt_frames: Sequence | None = None,
          n_recall: int = 40) -> ApResult:
    """Average precision over n_recall evenly spaced recall positions.

    Boxes must expose .score. Without frame ids everything is matched in a
    single frame; with them, matches never cross frames.
    """
    if det_frames is None:
        det_frames = [0] * len(dets)
    if gt_frames is None:
        gt_frames = [0] * len(gts)
    if len(det_frames) != len(dets) or len(gt_frames) != len(gts):
        raise ValueError("frame id lists must align with the box lists")
    if not gts:
        if not dets:
            return ApResult(ap=None, n_gt=0, n_det=0, n_matched=0)
        return ApResult(ap=0.0, n_gt=0, n_det=len(dets), n_matched=0)
    if not dets:
        return ApResult(ap=0.0, n_gt=len(gts), n_det=0, n_matched=0)

    _, tp = _greedy_match(dets, gts, iou_fn, threshold, det_frames, gt_frames)
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(dets) + 1)
    recalls = cum_tp / len(gts)
    precisions = cum_tp / ranks
    ap = 0.0
    for i in range(1, n_recall + 1):
        r = i / n_recall
        mask = recalls >= r - 1e-12
        ap += float(precisions[mask].max()) if np.any(mask) else 0.0
    ap /= n_recall
    return ApResult(
        ap=ap,
        n_gt=len(gts),
        n_det=len(dets),
        n_matched=int(cum_tp[-1]),
        pr_points=tuple(zip(recalls.tolist(), precisions.tolist())),
    )


# ---------------------------------------------------------------------------
# full report

def bin_label(lo: float, hi: float) -> str:
    return f"{lo:g}-{hi:g}m"


@dataclass(frozen=True)
class EvalReport:
    """AP per (class, kind, bin); laid out like a results table."""

    cells: dict[tuple[str, str, str], ApResult]
    classes: tuple[str, ...]
    kinds: tuple[str, ...]
    bin_labels: tuple[str, ...]

    def ap(self, cls: str, kind: str, bin_lbl: str) -> float | None:
        return self.cells[(cls, kind, bin_lbl)].ap

    def to_json_dict(self) -> dict:
        out: dict = {"classes": {}}
        for cls in self.classes:
            per_kind: dict = {}
            for kind in self.kinds:
                per_bin = {}
                for lbl in self.bin_labels:
                    cell = self.cells[(cls, kind, lbl)]
                    per_bin[lbl] = {
                        "ap": cell.ap,
                        "n_gt": cell.n_gt,
                        "n_det": cell.n_det,
                        "n_matched": cell.n_matched,
                    }
                per_kind[kind] = per_bin
            out["classes"][cls] = per_kind
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "kind", "bin", "ap", "n_gt", "n_det", "n_matched"])
        for cls in self.classes:
            for kind in self.kinds:
                for lbl in self.bin_labels:
                    cell = self.cells[(cls, kind, lbl)]
                    ap = "" if cell.ap is None else repr(cell.ap)
                    writer.writerow([cls, kind, lbl, ap, cell.n_gt, cell.n_det, cell.n_matched])
        return buf.getvalue()


def evaluate(predictions_path, labels_by_frame: Mapping[str, Path | str],
             cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Score a prediction file against per-frame label files."""
    preds = read_predictions(predictions_path)
    classes = tuple(sorted(cfg.iou_thresholds))
    unknown: set[str] = set()

    det_rows = []  # (frame, cls, box3d, box2d)
    for frame_id, box, box2d, _code in preds:
        if box.cls not in cfg.iou_thresholds:
            unknown.add(box.cls)
            continue
        det_rows.append((frame_id, box.cls, box, box2d))
    gt_rows = []
    for frame_id, path in sorted(labels_by_frame.items()):
        for obj in read_labels(path):
            if obj.box.cls not in cfg.iou_thresholds:
                unknown.add(obj.box.cls)
                continue
            gt_rows.append((frame_id, obj.box.cls, obj.box, obj.box2d))
    for name in sorted(unknown):
        logger.warning("class %r has no IoU threshold, ignoring its boxes", name)

    iou_fns = {"2d": iou_2d, "bev": iou_bev, "3d": iou_3d}
    cells: dict[tuple[str, str, str], ApResult] = {}
    labels = tuple(bin_label(lo, hi) for lo, hi in cfg.bins)
    for cls in classes:
        threshold = cfg.iou_thresholds[cls]
        cls_dets = [r for r in det_rows if r[1] == cls]
        cls_gts = [r for r in gt_rows if r[1] == cls]
        for kind in cfg.kinds:
            use_2d = kind == "2d"
            for (lo, hi), lbl in zip(cfg.bins, labels):
                dets = [r for r in cls_dets if lo <= r[2].z < hi]
                gts = [r for r in cls_gts if lo <= r[2].z < hi]
                boxes_d = [r[3] if use_2d else r[2] for r in dets]
                boxes_g = [r[3] if use_2d else r[2] for r in gts]
                cells[(cls, kind, lbl)] = ap_40(
                    boxes_d, boxes_g, iou_fns[kind], threshold,
                    det_frames=[r[0] for r in dets], gt_frames=[r[0] for r in gts],
                    n_recall=cfg.n_recall,
                )
    return EvalReport(cells=cells, classes=classes, kinds=cfg.kinds, bin_labels=labels)


# ---------------------------------------------------------------------------
# BEV sketches

def bev_svg(gts: Sequence[Box3D], dets: Sequence[Box3D],
            x_range: tuple[float, float] = (-40.0, 40.0),
            z_range: tuple[float, float] = (0.0, 110.0),
            scale: float = 6.0) -> str:
    """A BEV sketch of one frame: ground truth green, detections orange."""
    x0, x1 = x_range
    z0, z1 = z_range
    w = (x1 - x0) * scale
    h = (z1 - z0) * scale

    def to_px(x: float, z: float) -> tuple[float, float]:
        return (x - x0) * scale, (z1 - z) * scale  # z grows upward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect width="{w:.0f}" height="{h:.0f}" fill="#fafafa"/>',
    ]
    cx, cz = to_px(0.0, 0.0)
    parts.append(
        f'<path d="M {cx - 6:.1f} {cz:.1f} L {cx:.1f} {cz - 10:.1f} L {cx + 6:.1f} {cz:.1f} Z" '
        f'fill="#444"/>'
    )
    for boxes, color in ((gts, "#2e7d32"), (dets, "#ef6c00")):
        for b in boxes:
            pts = " ".join(
                f"{px:.1f},{pz:.1f}" for px, pz in (to_px(x, z) for x, z in b.bev_corners())
            )
            parts.append(
                f'<polygon points="{pts}" fill="{color}" fill-opacity="0.15" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
