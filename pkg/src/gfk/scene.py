"""Synthetic scene sampling and box bookkeeping.

A scene is a handful of upright boxes on a flat ground plane in front of the
camera, each tagged with a lambertian albedo. Boxes follow the usual
driving-dataset convention: (x, y, z) is the center of the bottom face, the
box extends from y up to y - h (y points down), yaw rotates about the
vertical axis.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .camera import DEFAULT_CAMERA, CameraModel, CamPoint, project, wrap_to_pi
from .errors import BehindCamera, FullyOutOfImage, InvalidAlbedo, ParseError
from .geometry import convex_intersection_area, rect_corners

logger = logging.getLogger(__name__)

# Corners behind this z (meters) are clipped before projection.
Z_CLIP = 1e-3


@dataclass(frozen=True)
class ObjectClass:
    """Per-class dimension statistics: mean (h, w, l) and height spread."""

    name: str
    dim_mean: tuple[float, float, float]
    sigma_h: float

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.dim_mean):
            raise ValueError(f"{self.name}: nonpositive mean dimension {self.dim_mean}")
        if self.sigma_h < 0:
            raise ValueError(f"{self.name}: negative sigma_h {self.sigma_h}")


# k=2 spans pedestrian heights 1.5 m to 2.0 m, which covers most adults.
PEDESTRIAN = ObjectClass("Pedestrian", (1.75, 0.6, 0.8), 0.125)
CAR = ObjectClass("Car", (1.55, 1.85, 4.30), 0.15)

DEFAULT_CLASSES: dict[str, ObjectClass] = {c.name: c for c in (CAR, PEDESTRIAN)}


@dataclass(frozen=True)
class Box3D:
    """An upright 3D box in the camera frame; (x, y, z) is the bottom-face center."""

    cls: str
    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    yaw: float
    score: float = 1.0

    def __post_init__(self) -> None:
        if self.h <= 0 or self.w <= 0 or self.l <= 0:
            raise ValueError(f"nonpositive dimension (h={self.h}, w={self.w}, l={self.l})")

    @property
    def center(self) -> CamPoint:
        return CamPoint(self.x, self.y, self.z)

    def bev_corners(self) -> np.ndarray:
        """Footprint corners in the x-z plane, CCW, shape (4, 2)."""
        return rect_corners(self.x, self.z, self.w, self.l, self.yaw)

    def corners_3d(self) -> np.ndarray:
        """All 8 corners, shape (8, 3): bottom face first, then top face."""
        bev = self.bev_corners()
        out = np.empty((8, 3))
        out[:4, 0] = out[4:, 0] = bev[:, 0]
        out[:4, 2] = out[4:, 2] = bev[:, 1]
        out[:4, 1] = self.y
        out[4:, 1] = self.y - self.h
        return out


# Edges of corners_3d, used when part of a box sits behind the image plane.
_BOX_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


@dataclass(frozen=True)
class Box2D:
    """An axis-aligned image box: center (u, v) with extents (w_u, h_v) in pixels."""

    cls: str
    u: float
    v: float
    w_u: float
    h_v: float
    score: float = 1.0

    def __post_init__(self) -> None:
        if self.w_u <= 0 or self.h_v <= 0:
            raise ValueError(f"nonpositive 2D box size ({self.w_u}, {self.h_v})")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


class SceneObject(NamedTuple):
    box: Box3D
    albedo: float


@dataclass(frozen=True)
class SceneDescription:
    """Everything the renderer needs for one frame."""

    objects: tuple[SceneObject, ...]
    background_albedo: float = 0.0
    background_range: float = 150.0
    frame_id: str = ""
    placement_warning: bool = False

    def __post_init__(self) -> None:
        for obj in self.objects:
            if not (0.0 <= obj.albedo <= 1.0):
                raise InvalidAlbedo(f"object albedo {obj.albedo} outside [0, 1]")
        if not (0.0 <= self.background_albedo <= 1.0):
            raise InvalidAlbedo(f"background albedo {self.background_albedo} outside [0, 1]")


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for sample_scene; placement happens inside the view frustum."""

    camera: CameraModel = DEFAULT_CAMERA
    classes: tuple[ObjectClass, ...] = (CAR, PEDESTRIAN)
    min_objects: int = 1
    max_objects: int = 4
    z_range: tuple[float, float] = (5.0, 85.0)
    ground_y: float = 1.65
    ground_y_jitter: float = 0.0
    albedo_range: tuple[float, float] = (0.2, 0.9)
    x_margin: float = 0.85
    background_albedo: float = 0.0
    background_range: float = 150.0
    max_retries: int = 100

    def __post_init__(self) -> None:
        if not (0 <= self.min_objects <= self.max_objects):
            raise ValueError(f"bad object count range [{self.min_objects}, {self.max_objects}]")
        z0, z1 = self.z_range
        if not (3.0 <= z0 < z1 <= 120.0):
            raise ValueError(f"z_range {self.z_range} outside [3, 120]")
        a0, a1 = self.albedo_range
        if not (0.0 <= a0 <= a1 <= 1.0):
            raise ValueError(f"albedo_range {self.albedo_range} outside [0, 1]")
        if self.ground_y_jitter < 0.0:
            raise ValueError(f"ground_y_jitter must be >= 0, got {self.ground_y_jitter}")
        if not self.classes:
            raise ValueError("at least one object class required")


def _trunc_normal(rng: np.random.Generator, mean: float, sigma: float, floor: float = 0.01) -> float:
    # resample until within +-3 sigma; keeps dimensions positive for sane stats
    if sigma <= 0:
        return mean
    while True:
        x = rng.normal(mean, sigma)
        if abs(x - mean) <= 3.0 * sigma and x > floor:
            return float(x)


def sample_scene(cfg: SceneConfig, rng: np.random.Generator, frame_id: str = "") -> SceneDescription:
    """Draw a random scene with pairwise disjoint BEV footprints.

    Placement is rejection-sampled; if an object cannot be placed within
    cfg.max_retries attempts it is dropped and the scene is returned with
    placement_warning set.
    """
    cam = cfg.camera
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    objects: list[SceneObject] = []
    footprints: list[np.ndarray] = []
    warning = False
    for _ in range(n):
        placed = False
        for _ in range(cfg.max_retries):
            cls = cfg.classes[int(rng.integers(len(cfg.classes)))]
            mh, mw, ml = cls.dim_mean
            h = _trunc_normal(rng, mh, cls.sigma_h)
            w = _trunc_normal(rng, mw, cls.sigma_h * mw / mh)
            length = _trunc_normal(rng, ml, cls.sigma_h * ml / mh)
            z = float(rng.uniform(*cfg.z_range))
            x_lo = -cam.c_u / cam.f_u * z * cfg.x_margin
            x_hi = (cam.width - 1 - cam.c_u) / cam.f_u * z * cfg.x_margin
            x = float(rng.uniform(x_lo, x_hi))
            yaw = wrap_to_pi(float(rng.uniform(-math.pi, math.pi)))
            y = cfg.ground_y
            if cfg.ground_y_jitter > 0.0:
                # per-object vertical offset: road grade / mounting pitch spread
                y += float(rng.uniform(-cfg.ground_y_jitter, cfg.ground_y_jitter))
            box = Box3D(cls.name, x, y, z, h, w, length, yaw)
            corners = box.bev_corners()
            if all(convex_intersection_area(corners, c) == 0.0 for c in footprints):
                albedo = float(rng.uniform(*cfg.albedo_range))
                objects.append(SceneObject(box, albedo))
                footprints.append(corners)
                placed = True
                break
        if not placed:
            warning = True
            logger.warning("scene %s: placement retries exhausted, dropping an object", frame_id)
    return SceneDescription(
        objects=tuple(objects),
        background_albedo=cfg.background_albedo,
        background_range=cfg.background_range,
        frame_id=frame_id,
        placement_warning=warning,
    )


def oracle_box2d(b: Box3D, cam: CameraModel) -> Box2D:
    """Tight axis-aligned image box around the projected 3D box.

    Corners behind the image plane are clipped against z = Z_CLIP before
    projection. Raises BehindCamera when nothing is in front, FullyOutOfImage
    when the projected hull misses the sensor.
    """
    pts = b.corners_3d()
    z = pts[:, 2]
    if np.all(z <= Z_CLIP):
        raise BehindCamera(f"box at z={b.z} entirely behind the camera")
    keep = [pts[i] for i in range(8) if z[i] > Z_CLIP]
    for i, j in _BOX_EDGES:
        if (z[i] > Z_CLIP) != (z[j] > Z_CLIP):
            t = (Z_CLIP - z[i]) / (z[j] - z[i])
            keep.append(pts[i] + t * (pts[j] - pts[i]))
    us, vs = [], []
    for p in keep:
        px = project(CamPoint(*p), cam)
        us.append(px.u)
        vs.append(px.v)
    u_min = max(min(us), 0.0)
    u_max = min(max(us), cam.width - 1.0)
    v_min = max(min(vs), 0.0)
    v_max = min(max(vs), cam.height - 1.0)
    if u_max <= u_min or v_max <= v_min:
        raise FullyOutOfImage(f"box at ({b.x:.1f}, {b.z:.1f}) projects outside the image")
    return Box2D(
        cls=b.cls,
        u=(u_min + u_max) / 2.0,
        v=(v_min + v_max) / 2.0,
        w_u=u_max - u_min,
        h_v=v_max - v_min,
        score=b.score,
    )


def perturb_box2d(b: Box2D, level: float, rng: np.random.Generator) -> Box2D:
    """Detector-style degradation of a 2D box.

    Center jitter is N(0, (level * extent)^2) per axis, extents get
    multiplicative log-normal jitter with sigma=level, and the score drops
    by the same fraction. level=0 returns the box unchanged.
    """
    if level < 0:
        raise ValueError(f"perturbation level {level} must be >= 0")
    u = b.u + rng.normal(0.0, level * b.w_u)
    v = b.v + rng.normal(0.0, level * b.h_v)
    w_u = b.w_u * math.exp(rng.normal(0.0, level))
    h_v = b.h_v * math.exp(rng.normal(0.0, level))
    score = b.score * max(0.0, 1.0 - level)
    return replace(b, u=float(u), v=float(v), w_u=float(w_u), h_v=float(h_v), score=score)


# ---------------------------------------------------------------------------
# label files: one JSON object per line per frame

class LabeledObject(NamedTuple):
    box: Box3D
    box2d: Box2D
    albedo: float


def label_record(obj: LabeledObject) -> dict:
    b, p = obj.box, obj.box2d
    return {
        "class": b.cls,
        "x": b.x, "y": b.y, "z": b.z,
        "h": b.h, "w": b.w, "l": b.l,
        "yaw": b.yaw,
        "box2d": [p.u, p.v, p.w_u, p.h_v],
        "albedo": obj.albedo,
    }


def parse_label(rec: dict, where: str = "label") -> LabeledObject:
    try:
        cls = str(rec["class"])
        box = Box3D(
            cls=cls,
            x=float(rec["x"]), y=float(rec["y"]), z=float(rec["z"]),
            h=float(rec["h"]), w=float(rec["w"]), l=float(rec["l"]),
            yaw=float(rec["yaw"]),
        )
        u, v, w_u, h_v = (float(t) for t in rec["box2d"])
        box2d = Box2D(cls=cls, u=u, v=v, w_u=w_u, h_v=h_v)
        albedo = float(rec["albedo"])
    except (KeyError, TypeError) as e:
        raise ParseError(f"{where}: missing or malformed field: {e}") from e
    return LabeledObject(box, box2d, albedo)


def labels_to_jsonl(objs: list[LabeledObject]) -> str:
    return "".join(json.dumps(label_record(o)) + "\n" for o in objs)


def read_labels(path: str | Path) -> list[LabeledObject]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {e}") from e
        try:
            out.append(parse_label(rec, where=f"{path}:{lineno}"))
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: {e}") from e
    return out
