"""Planar polygon helpers for bird's-eye-view box geometry.

The BEV plane is camera x (right) against camera z (forward). Rectangles are
handed around as (4, 2) corner arrays in counterclockwise order; intersection
uses Sutherland-Hodgman clipping, area the shoelace formula.
"""

from __future__ import annotations

import numpy as np

# Intersections thinner than this are treated as empty.
AREA_EPS = 1e-12


def rect_corners(cx: float, cz: float, width: float, length: float, yaw: float):
    """Corners of a rotated rectangle in the x-z plane, CCW, shape (4, 2).

    length runs along the heading given by yaw, width across it.
    """
    c, s = np.cos(yaw), np.sin(yaw)
    dx, dz = length / 2.0, width / 2.0
    local = np.array([[dx, dz], [-dx, dz], [-dx, -dz], [dx, -dz]], dtype=float)
    rot = np.array([[c, s], [-s, c]])
    return local @ rot.T + np.array([cx, cz])


def polygon_area(poly: np.ndarray) -> float:
    """Unsigned area of a simple polygon given as an (n, 2) vertex array."""
    if len(poly) < 3:
        return 0.0
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject polygon by a convex CCW clip polygon.

    Returns the intersection polygon as an (m, 2) array; m may be 0.
    """
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        cp1 = clip[i]
        cp2 = clip[(i + 1) % n]
        edge = (cp2[0] - cp1[0], cp2[1] - cp1[1])

        def inside(p):
            return edge[0] * (p[1] - cp1[1]) - edge[1] * (p[0] - cp1[0]) >= 0.0

        input_list = output
        output = []
        s = input_list[-1]
        for e in input_list:
            if inside(e):
                if not inside(s):
                    output.append(_intersect(s, e, cp1, cp2))
                output.append(e)
            elif inside(s):
                output.append(_intersect(s, e, cp1, cp2))
            s = e
    return np.array(output, dtype=float).reshape(-1, 2)


def _intersect(s, e, cp1, cp2):
    dc = (cp1[0] - cp2[0], cp1[1] - cp2[1])
    dp = (s[0] - e[0], s[1] - e[1])
    n1 = cp1[0] * cp2[1] - cp1[1] * cp2[0]
    n2 = s[0] * e[1] - s[1] * e[0]
    n3 = 1.0 / (dc[0] * dp[1] - dc[1] * dp[0])
    return ((n1 * dp[0] - n2 * dc[0]) * n3, (n1 * dp[1] - n2 * dc[1]) * n3)


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    inter = clip_convex(a, b)
    if len(inter) < 3:
        return 0.0
    area = polygon_area(inter)
    return area if area > AREA_EPS else 0.0
