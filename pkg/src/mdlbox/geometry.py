"""Oriented bounding box geometry: representations, SkewIoU, rotated NMS.

Boxes live in image coordinates (x right, y down). An oriented box is either
a (cx, cy, w, h, theta) tuple or a (4, 2) array of vertices ordered
top-left, top-right, bottom-right, bottom-left in the box's own frame.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Points within this distance of a clip line count as on the line, which
# avoids sliver polygons from floating-point noise.
CLIP_EPS = 1e-9

# Union areas below this are treated as degenerate (IoU defined as 0).
AREA_EPS = 1e-12


@dataclass(frozen=True)
class BoxCWHA:
    """Five-parameter box: center, width, height, rotation angle (radians)."""

    cx: float
    cy: float
    w: float
    h: float
    theta: float


@dataclass(frozen=True)
class Detection:
    """A scored, class-labeled oriented box. ``box`` is a (4, 2) vertex array."""

    box: np.ndarray
    score: float
    class_id: object

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score {self.score} outside [0, 1]")


def _as_points(pts, n_min=3):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < n_min:
        raise InvalidInputError(f"expected (>= {n_min}, 2) points, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise InvalidInputError("non-finite coordinates")
    return pts


def vertices_from_cwha(box: BoxCWHA) -> np.ndarray:
    """Corners of the rotated rectangle as a (4, 2) array.

    Order is top-left, top-right, bottom-right, bottom-left in the box's own
    frame (y-down image convention, counter-clockwise rotation matrix).
    """
    fields = (box.cx, box.cy, box.w, box.h, box.theta)
    if not np.isfinite(fields).all():
        raise InvalidInputError(f"non-finite box parameters {fields}")
    if box.w < 0 or box.h < 0:
        raise InvalidInputError(f"negative dimensions w={box.w} h={box.h}")
    hw, hh = box.w / 2.0, box.h / 2.0
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    c, s = np.cos(box.theta), np.sin(box.theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.cx, box.cy])


def signed_area(pts) -> float:
    """Shoelace signed area; sign encodes winding."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(pts) -> float:
    """Non-negative shoelace area of a polygon with >= 3 vertices."""
    return abs(signed_area(_as_points(pts)))


def is_convex(pts, eps=CLIP_EPS) -> bool:
    """True iff consecutive-edge cross products all share a sign (zeros allowed)."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3 or not np.isfinite(pts).all():
        return False
    edges = np.roll(pts, -1, axis=0) - pts
    cross = edges[:, 0] * np.roll(edges[:, 1], -1) - edges[:, 1] * np.roll(edges[:, 0], -1)
    return bool((cross >= -eps).all() or (cross <= eps).all())


def require_convex(pts) -> np.ndarray:
    pts = _as_points(pts)
    if not is_convex(pts):
        raise InvalidInputError("vertex set is not a convex polygon with consistent winding")
    return pts


def _ccw(pts):
    # Normalize winding so the interior is on the left of each directed edge.
    return pts if signed_area(pts) >= 0 else pts[::-1]


def intersect_convex(p, q) -> np.ndarray:
    """Intersection of two convex polygons by Sutherland-Hodgman clipping.

    Returns a (k, 2) array; k may be 0 for disjoint inputs.
    """
    subject = _ccw(require_convex(p))
    clip = _ccw(require_convex(q))
    out = [tuple(v) for v in subject]
    for i in range(len(clip)):
        if not out:
            break
        a = clip[i]
        b = clip[(i + 1) % len(clip)]
        ex, ey = b[0] - a[0], b[1] - a[1]
        inp = out
        out = []
        # side > 0 means strictly inside the half-plane left of edge a->b
        sides = [ex * (v[1] - a[1]) - ey * (v[0] - a[0]) for v in inp]
        for j, v in enumerate(inp):
            w = inp[(j + 1) % len(inp)]
            sv, sw = sides[j], sides[(j + 1) % len(inp)]
            if sv >= -CLIP_EPS:
                out.append(v)
            if (sv < -CLIP_EPS) != (sw < -CLIP_EPS):
                t = sv / (sv - sw)
                out.append((v[0] + t * (w[0] - v[0]), v[1] + t * (w[1] - v[1])))
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.array(out)


def skew_iou(p, q) -> float:
    """Intersection-over-union of two oriented boxes via exact clipping."""
    p = require_convex(_as_points(p, n_min=4))
    q = require_convex(_as_points(q, n_min=4))
    ap, aq = polygon_area(p), polygon_area(q)
    inter = intersect_convex(p, q)
    ai = polygon_area(inter) if len(inter) >= 3 else 0.0
    union = ap + aq - ai
    if union < AREA_EPS:
        return 0.0
    return ai / union


def rotated_nms(dets, iou_threshold: float):
    """Greedy per-class non-maximum suppression on SkewIoU.

    Detections are visited in descending score order (ties broken by input
    index); a detection is kept iff its overlap with every same-class kept
    detection is <= iou_threshold.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise InvalidInputError(f"iou_threshold {iou_threshold} outside [0, 1]")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        d = dets[i]
        if all(k.class_id != d.class_id or skew_iou(k.box, d.box) <= iou_threshold
               for k in kept):
            kept.append(d)
    return kept
