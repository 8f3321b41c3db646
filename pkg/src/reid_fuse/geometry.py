"""Texture-anchored slice geometry.

Computes body-quarter corners as convex-hull support points, the
lateral-line segment separating the two quarters, and the three slice
intervals of each quarter in a rotated frame where the lateral line is
horizontal. Angles follow the mathematical convention (counterclockwise
positive, y up); image-coordinate callers get consistent results because
every operation is expressed through the same convention.

Slice convention: the posterior lateral-line endpoint maps to x=0 and
the anterior endpoint (larger projection onto the swimming direction)
to x=L. Cut fractions are measured from the posterior end. Each slice
is then widened across every internal boundary it touches by
overlap_fraction times its own nominal width; the outer edges 0 and L
stay fixed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import GeometryParams
from .errors import (
    CoincidentCenters,
    CoincidentCentroids,
    DegenerateHull,
    DegeneratePolygon,
    DuplicateCornerWarning,
    ZeroLengthLateralLine,
)


def _as_points(poly) -> np.ndarray:
    pts = np.asarray(poly, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) point array, got shape {pts.shape}")
    return pts


def polygon_area(poly) -> float:
    """Unsigned shoelace area of a simple polygon."""
    pts = _as_points(poly)
    x, y = pts[:, 0], pts[:, 1]
    signed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    return abs(float(signed))


def polygon_centroid(poly) -> np.ndarray:
    """Area centroid of a simple polygon (shoelace-weighted)."""
    pts = _as_points(poly)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = 0.5 * float(np.sum(cross))
    if signed == 0.0:
        raise DegeneratePolygon("polygon has zero area, centroid undefined")
    cx = float(np.sum((x + xn) * cross)) / (6.0 * signed)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * signed)
    return np.array([cx, cy])


def convex_hull(points) -> np.ndarray:
    """Convex hull vertices in counterclockwise order (Andrew monotone chain).

    Collinear points along hull edges are dropped, so the result holds
    vertices only. Raises DegenerateHull when fewer than three distinct
    vertices remain (all points collinear or coincident).
    """
    pts = _as_points(points)
    uniq = sorted({(float(p[0]), float(p[1])) for p in pts})
    if len(uniq) < 3:
        raise DegenerateHull(f"need 3 distinct points, got {len(uniq)}")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in uniq:
        while len(lower) > 1 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(uniq):
        while len(upper) > 1 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("all points are collinear")
    return np.array(hull)


def rotate(v, angle_rad: float) -> np.ndarray:
    """Rotate 2-vector(s) counterclockwise by angle_rad."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    rot = np.array([[c, -s], [s, c]])
    return np.asarray(v, dtype=np.float64) @ rot.T


def bbox_center(bbox) -> np.ndarray:
    x, y, w, h = (float(v) for v in bbox)
    return np.array([x + w / 2.0, y + h / 2.0])


def swimming_direction(head_bbox, tail_bbox) -> np.ndarray:
    """Unit vector from the tail-fin box center toward the head box center."""
    head = bbox_center(head_bbox)
    tail = bbox_center(tail_bbox)
    delta = head - tail
    norm = float(np.hypot(delta[0], delta[1]))
    if norm == 0.0:
        raise CoincidentCenters("head and tail box centers coincide")
    return delta / norm


def support_point(hull: np.ndarray, direction) -> int:
    """Index of the hull vertex maximizing the dot product with direction.

    Ties resolve to the lowest index in the hull's counterclockwise order.
    """
    scores = hull @ np.asarray(direction, dtype=np.float64)
    return int(np.argmax(scores))  # argmax takes the first of equal maxima


def quarter_corners(mask_polygon, direction, params: GeometryParams | None = None) -> np.ndarray:
    """Four quarter corners as hull support points.

    The four probe directions are the swimming direction and its negation,
    each rotated by +offset and -offset degrees. Returns a (4, 2) array in
    the order [+offset of d, -offset of d, +offset of -d, -offset of -d].
    Emits DuplicateCornerWarning when one hull vertex is picked twice
    (possible on hulls with very few vertices).
    """
    params = params or GeometryParams()
    d = np.asarray(direction, dtype=np.float64)
    hull = convex_hull(mask_polygon)
    offset = math.radians(params.corner_offset_deg)
    probes = [rotate(d, offset), rotate(d, -offset), rotate(-d, offset), rotate(-d, -offset)]
    picks = [support_point(hull, probe) for probe in probes]
    if len(set(picks)) < 4:
        warnings.warn(
            f"hull vertex picked for more than one probe direction (indices {picks})",
            DuplicateCornerWarning,
            stacklevel=2,
        )
    return hull[picks]


def lateral_segment(q1_corners, q2_corners, q1_centroid, q2_centroid,
                    quarter_kind: str) -> np.ndarray:
    """Two corner points spanning the lateral line of the requested quarter.

    With n the unit vector from the Q2 centroid toward the Q1 centroid,
    the lateral edge of Q1 is its two corners with the smallest projection
    onto n (the edge facing Q2), and the lateral edge of Q2 its two
    corners with the largest projection. Returns a (2, 2) array.
    """
    c1 = np.asarray(q1_centroid, dtype=np.float64)
    c2 = np.asarray(q2_centroid, dtype=np.float64)
    axis = c1 - c2
    norm = float(np.hypot(axis[0], axis[1]))
    if norm == 0.0:
        raise CoincidentCentroids("quarter centroids coincide")
    axis = axis / norm

    if quarter_kind == "Q1":
        corners = np.asarray(q1_corners, dtype=np.float64)
        order = np.argsort(corners @ axis, kind="stable")[:2]
    elif quarter_kind == "Q2":
        corners = np.asarray(q2_corners, dtype=np.float64)
        order = np.argsort(-(corners @ axis), kind="stable")[:2]
    else:
        raise ValueError(f"quarter_kind must be Q1 or Q2, got {quarter_kind!r}")
    return corners[np.sort(order)]


@dataclass(frozen=True)
class RigidTransform:
    """Rotation about a pivot that also moves the pivot to the origin.

    apply(p) = R(angle) @ (p - pivot); invert reverses it exactly.
    """

    angle: float
    pivot: tuple[float, float]

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return rotate(pts - np.asarray(self.pivot), self.angle)

    def invert(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return rotate(pts, -self.angle) + np.asarray(self.pivot)


@dataclass(frozen=True)
class SliceLayout:
    """Slice geometry of one body quarter.

    slice_intervals are [x_lo, x_hi] spans in the rotated frame where the
    posterior lateral endpoint sits at x=0 and the anterior at x=length.
    band is the [y_lo, y_hi] extent of the rotated mask polygon, giving
    croppers a full 2-D region per slice.
    """

    quarter_kind: str
    rotation: RigidTransform
    lateral_segment: tuple[tuple[float, float], tuple[float, float]]
    slice_intervals: tuple[tuple[float, float], ...]
    length: float
    band: tuple[float, float]


def slice_layout(mask_polygon, lateral_seg, direction,
                 params: GeometryParams | None = None, quarter_kind: str = "Q1") -> SliceLayout:
    """Rotate so the lateral line is horizontal and place the slice cuts.

    The nominal intervals split [0, L] at the two cut fractions; each
    internal boundary is then pushed into both adjacent slices by
    overlap_fraction times the nominal width of the slice being widened.
    """
    params = params or GeometryParams()
    seg = np.asarray(lateral_seg, dtype=np.float64)
    if seg.shape != (2, 2):
        raise ValueError(f"lateral segment must be two 2-D points, got shape {seg.shape}")
    d = np.asarray(direction, dtype=np.float64)

    proj = seg @ d
    anterior = seg[int(np.argmax(proj))]
    posterior = seg[1 - int(np.argmax(proj))]
    v = anterior - posterior
    length = float(np.hypot(v[0], v[1]))
    if length == 0.0:
        raise ZeroLengthLateralLine("lateral segment endpoints coincide")

    transform = RigidTransform(angle=-math.atan2(v[1], v[0]),
                               pivot=(float(posterior[0]), float(posterior[1])))

    c1, c2 = params.cut_fractions
    cuts = (0.0, c1 * length, c2 * length, length)
    widths = (cuts[1] - cuts[0], cuts[2] - cuts[1], cuts[3] - cuts[2])
    f = params.overlap_fraction
    # expansions never escape the quarter: clamp to [0, L]
    intervals = (
        (cuts[0], min(cuts[1] + f * widths[0], length)),
        (max(cuts[1] - f * widths[1], 0.0), min(cuts[2] + f * widths[1], length)),
        (max(cuts[2] - f * widths[2], 0.0), cuts[3]),
    )

    rotated = transform.apply(_as_points(mask_polygon))
    band = (float(rotated[:, 1].min()), float(rotated[:, 1].max()))

    return SliceLayout(
        quarter_kind=quarter_kind,
        rotation=transform,
        lateral_segment=((float(seg[0, 0]), float(seg[0, 1])), (float(seg[1, 0]), float(seg[1, 1]))),
        slice_intervals=intervals,
        length=length,
        band=band,
    )


@dataclass(frozen=True)
class SliceCropDescriptor:
    """One slice region plus the transform an external cropper needs."""

    quarter_kind: str
    slice_index: int
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    rotation: RigidTransform
    image_path: str


def export_slice_crops(layout: SliceLayout, image_path: str) -> list[SliceCropDescriptor]:
    """Emit the three crop descriptors of a layout; no pixels are touched."""
    return [
        SliceCropDescriptor(
            quarter_kind=layout.quarter_kind,
            slice_index=i,
            x_lo=lo,
            x_hi=hi,
            y_lo=layout.band[0],
            y_hi=layout.band[1],
            rotation=layout.rotation,
            image_path=image_path,
        )
        for i, (lo, hi) in enumerate(layout.slice_intervals)
    ]
