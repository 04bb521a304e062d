"""Independent oracles the tests check the library against.

Each oracle recomputes a quantity the library produces in closed form, using
a method that shares no code with the implementation: adaptive quadrature for
the range-intensity profile, stratified Monte Carlo for rotated-rectangle
IoU, threshold enumeration for average precision, and central differences
for gradients. Keep these dumb and obviously correct.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from gfk import SPEED_OF_LIGHT


def quad_rip(gate, r: float) -> float:
    """Range-intensity profile by numerical integration of the indicator
    product: the gate window is open on [delay, delay+gate_duration], the
    echo of the pulse occupies [2r/c, 2r/c + pulse_duration]."""
    tof = 2.0 * r / SPEED_OF_LIGHT
    g0, g1 = gate.delay, gate.delay + gate.gate_duration
    p0, p1 = tof, tof + gate.pulse_duration

    def integrand(t: float) -> float:
        return 1.0 if (g0 <= t <= g1 and p0 <= t <= p1) else 0.0

    lo, hi = min(g0, p0), max(g1, p1)
    pts = sorted({g0, g1, p0, p1})
    val, _err = quad(integrand, lo, hi, points=pts, limit=500)
    att = math.exp(-2.0 * gate.attenuation_gamma * r)
    if gate.inverse_square:
        att /= max(r, 0.5) ** 2
    return gate.gate_amplitude * gate.pulse_amplitude * val * att


def _inside_convex(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Boolean mask of pts inside the convex polygon (either winding)."""
    n = len(poly)
    area2 = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    sign = 1.0 if area2 >= 0 else -1.0
    ok = np.ones(len(pts), dtype=bool)
    for i in range(n):
        v0 = poly[i]
        e = poly[(i + 1) % n] - v0
        cross = e[0] * (pts[:, 1] - v0[1]) - e[1] * (pts[:, 0] - v0[0])
        ok &= sign * cross >= 0.0
    return ok


def mc_iou_bev(a, b, n_side: int = 1000, seed: int = 0) -> float:
    """Rotated-footprint IoU by stratified Monte Carlo: one jittered sample
    per cell of an n_side x n_side grid over the joint bounding box. Only
    the intersection is sampled; the union uses the exact rectangle areas."""
    ca, cb = a.bev_corners(), b.bev_corners()
    allc = np.vstack([ca, cb])
    lo, hi = allc.min(axis=0), allc.max(axis=0)
    span = hi - lo
    rng = np.random.default_rng(seed)
    gx = (np.arange(n_side)[:, None] + rng.random((n_side, n_side))) / n_side
    gy = (np.arange(n_side)[None, :] + rng.random((n_side, n_side))) / n_side
    pts = np.stack([lo[0] + gx.ravel() * span[0], lo[1] + gy.ravel() * span[1]], axis=1)
    both = _inside_convex(ca, pts) & _inside_convex(cb, pts)
    inter = both.mean() * span[0] * span[1]
    union = a.w * a.l + b.w * b.l - inter
    return inter / union if union > 0 else 0.0


def brute_force_ap40(dets, gts, iou_fn, threshold: float,
                     det_frames=None, gt_frames=None, n_recall: int = 40) -> float:
    """Average precision by score-threshold enumeration.

    For every distinct detection score, keep the detections at or above it,
    match them greedily from scratch, and record one (recall, precision)
    point; interpolated precision at recall r is the best precision among
    points with recall >= r. Scores must be distinct for this to define the
    same curve as the cumulative form.
    """
    if det_frames is None:
        det_frames = [0] * len(dets)
    if gt_frames is None:
        gt_frames = [0] * len(gts)
    if not gts:
        return 0.0 if dets else math.nan
    if not dets:
        return 0.0

    def match_count(subset_idx) -> int:
        ordered = sorted(subset_idx, key=lambda i: -dets[i].score)
        taken = [False] * len(gts)
        tp = 0
        for di in ordered:
            best, best_j = 0.0, -1
            for j in range(len(gts)):
                if taken[j] or gt_frames[j] != det_frames[di]:
                    continue
                iou = iou_fn(dets[di], gts[j])
                if iou >= threshold and iou > best:
                    best, best_j = iou, j
            if best_j >= 0:
                taken[best_j] = True
                tp += 1
        return tp

    points = []
    for tau in sorted({d.score for d in dets}, reverse=True):
        subset = [i for i in range(len(dets)) if dets[i].score >= tau]
        tp = match_count(subset)
        points.append((tp / len(gts), tp / len(subset)))

    ap = 0.0
    for i in range(1, n_recall + 1):
        r = i / n_recall
        cands = [p for rec, p in points if rec >= r - 1e-12]
        ap += max(cands) if cands else 0.0
    return ap / n_recall


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * step)
    return g
