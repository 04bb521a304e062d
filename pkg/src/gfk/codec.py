"""Frustum-segment encoding of 3D boxes against their 2D detections.

The pixel height h_v of a 2D box pins its depth up to the unknown metric
height of the object: z = f(h_v, h) = h * f_v / h_v. Sweeping h over the
class statistics mu_h +- k * sigma_h turns the viewing frustum of the box
into a depth segment [z_near, z_far]; depth is regressed as an offset within
that segment, which keeps the target scale-free across ranges. The other
offsets are plain normalized residuals, orientation is carried as
(sin, cos) of the observation angle.

Encoding anchors depth with the true object height; decoding anchors with
the height the network predicted. Both sides use the same segment length, so
encode followed by decode is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .camera import (
    CameraModel,
    CamPoint,
    PixelPoint,
    backproject,
    observation_angle_to_yaw,
    project,
    yaw_to_observation_angle,
)
from .errors import DegenerateBox, InvalidStats, NonPositiveDepth, NonPositiveDimension, ParseError
from .scene import Box2D, Box3D, ObjectClass

# Half-width of the height sweep in sigmas.
K_DEFAULT = 2.0
# Floor on the segment length (meters) so dz stays bounded as sigma_h -> 0.
D_MIN = 0.25
# Decoded depths at or below this (meters) are rejected.
Z_FLOOR = 0.5
# 2D boxes shorter than this (pixels) carry no usable depth information.
EPS_PX = 1e-3


@dataclass(frozen=True)
class FrustumCode:
    """The eight regression coefficients for one box."""

    du: float
    dv: float
    dz: float
    dh: float
    dw: float
    dl: float
    sin_t: float
    cos_t: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.du, self.dv, self.dz, self.dh, self.dw, self.dl, self.sin_t, self.cos_t]
        )

    @classmethod
    def from_array(cls, a) -> "FrustumCode":
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (8,):
            raise ValueError(f"expected 8 coefficients, got shape {a.shape}")
        return cls(*(float(t) for t in a))


@dataclass(frozen=True)
class FrustumSegment:
    """Depth segment of a 2D box under a class height sweep."""

    z_near: float
    z_far: float
    d: float         # segment length used for normalization, >= D_MIN
    z_anchor: float  # depth triangulated from the reference height


def triangulate_depth(h_v: float, h: float, cam: CameraModel) -> float:
    """Depth from a pixel height and a metric height: z = h * f_v / h_v."""
    if h_v <= EPS_PX:
        raise DegenerateBox(f"pixel height {h_v} too small")
    if h <= 0:
        raise ValueError(f"metric height {h} must be positive")
    return (h * cam.f_v) / h_v


def frustum_segment(p: Box2D, stats: ObjectClass, k: float, cam: CameraModel,
                    h_ref: float | None = None) -> FrustumSegment:
    """Depth segment spanned by heights mu_h +- k * sigma_h at p's pixel height.

    h_ref picks the anchor height: the true height when encoding, the
    predicted height when decoding. Defaults to the class mean.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    mu_h = stats.dim_mean[0]
    h_lo = mu_h - k * stats.sigma_h
    h_hi = mu_h + k * stats.sigma_h
    if h_lo <= 0:
        raise InvalidStats(f"{stats.name}: mu_h - k*sigma_h = {h_lo} <= 0")
    z_near = triangulate_depth(p.h_v, h_lo, cam)
    z_far = triangulate_depth(p.h_v, h_hi, cam)
    d = max(z_far - z_near, D_MIN)
    anchor = h_ref if h_ref is not None else mu_h
    return FrustumSegment(z_near=z_near, z_far=z_far, d=d,
                          z_anchor=triangulate_depth(p.h_v, anchor, cam))


def encode(b: Box3D, p: Box2D, stats: ObjectClass, k: float, cam: CameraModel) -> FrustumCode:
    """Regression targets of a 3D box relative to its 2D box."""
    if b.cls != p.cls:
        raise ValueError(f"class mismatch: 3D box is {b.cls}, 2D box is {p.cls}")
    px = project(b.center, cam)
    seg = frustum_segment(p, stats, k, cam, h_ref=b.h)
    mu_h, mu_w, mu_l = stats.dim_mean
    theta = yaw_to_observation_angle(b.yaw, b.center)
    return FrustumCode(
        du=(px.u - p.u) / p.w_u,
        dv=(px.v - p.v) / p.h_v,
        dz=(b.z - seg.z_anchor) / seg.d,
        dh=(b.h - mu_h) / mu_h,
        dw=(b.w - mu_w) / mu_w,
        dl=(b.l - mu_l) / mu_l,
        sin_t=math.sin(theta),
        cos_t=math.cos(theta),
    )


def decode(q: FrustumCode, p: Box2D, stats: ObjectClass, k: float, cam: CameraModel) -> Box3D:
    """Rebuild a 3D box from predicted coefficients and the 2D box they refer to."""
    mu_h, mu_w, mu_l = stats.dim_mean
    for name, d_rel in (("h", q.dh), ("w", q.dw), ("l", q.dl)):
        if 1.0 + d_rel <= 0:
            raise NonPositiveDimension(f"decoded {name} would be nonpositive (offset {d_rel})")
    h = mu_h * (1.0 + q.dh)
    w = mu_w * (1.0 + q.dw)
    length = mu_l * (1.0 + q.dl)
    seg = frustum_segment(p, stats, k, cam, h_ref=h)
    z = q.dz * seg.d + seg.z_anchor
    if z <= Z_FLOOR:
        raise NonPositiveDepth(f"decoded depth {z} at or below {Z_FLOOR} m")
    center_px = PixelPoint(u=p.u + q.du * p.w_u, v=p.v + q.dv * p.h_v)
    pt = backproject(center_px, z, cam)
    theta = math.atan2(q.sin_t, q.cos_t)  # scale-invariant, so no explicit normalization
    yaw = observation_angle_to_yaw(theta, pt)
    return Box3D(cls=p.cls, x=pt.x, y=pt.y, z=pt.z, h=h, w=w, l=length, yaw=yaw, score=p.score)


# ---------------------------------------------------------------------------
# prediction files: one JSON object per line

def prediction_record(frame_id: str, b: Box3D, p: Box2D, q: FrustumCode) -> dict:
    return {
        "frame": frame_id,
        "class": b.cls,
        "x": b.x, "y": b.y, "z": b.z,
        "h": b.h, "w": b.w, "l": b.l,
        "yaw": b.yaw,
        "score": b.score,
        "box2d": [p.u, p.v, p.w_u, p.h_v],
        "code": list(q.as_array()),
    }


def parse_prediction(rec: dict, where: str = "prediction") -> tuple[str, Box3D, Box2D, FrustumCode]:
    try:
        frame_id = str(rec["frame"])
        cls = str(rec["class"])
        box = Box3D(
            cls=cls,
            x=float(rec["x"]), y=float(rec["y"]), z=float(rec["z"]),
            h=float(rec["h"]), w=float(rec["w"]), l=float(rec["l"]),
            yaw=float(rec["yaw"]),
            score=float(rec["score"]),
        )
        u, v, w_u, h_v = (float(t) for t in rec["box2d"])
        box2d = Box2D(cls=cls, u=u, v=v, w_u=w_u, h_v=h_v, score=float(rec["score"]))
        code = FrustumCode.from_array(rec["code"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: missing or malformed field: {e}") from e
    return frame_id, box, box2d, code


def read_predictions(path) -> list[tuple[str, Box3D, Box2D, FrustumCode]]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {e}") from e
        out.append(parse_prediction(rec, where=f"{path}:{lineno}"))
    return out


def predictions_to_jsonl(rows: Iterable[tuple[str, Box3D, Box2D, FrustumCode]]) -> str:
    return "".join(
        json.dumps(prediction_record(fid, b, p, q)) + "\n" for fid, b, p, q in rows
    )
