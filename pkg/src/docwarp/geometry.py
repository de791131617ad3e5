"""Exact 2-D primitives: homogeneous transforms, polygon area, hull, clipping,
minimum-area rectangles.

Conventions used throughout the toolkit:

- Pixel coordinates, origin at the top-left corner, y grows downward.
- Points are float arrays of shape (2,) or stacked as (N, 2).
- Polygons are (N, 2) float arrays, N >= 3, no repeated closing vertex.
- A positive rotation angle appears clockwise on screen (standard rotation
  matrix applied in y-down axes).
- ``signed_area`` is positive for vertex order that appears clockwise on
  screen (counter-clockwise in math axes). This one sign convention is
  asserted everywhere; do not flip it locally.

All functions are pure and hold no state.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometry, DegenerateW, SingularMatrix

_W_EPS = 1e-12


def translation(tx: float, ty: float) -> np.ndarray:
    """3x3 translation matrix."""
    m = np.eye(3)
    m[0, 2] = tx
    m[1, 2] = ty
    return m


def rotation_deg(angle_deg: float) -> np.ndarray:
    """3x3 rotation about the origin; positive angle is clockwise on screen."""
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def scaling(sx: float, sy: float) -> np.ndarray:
    """3x3 axis scaling about the origin."""
    return np.diag([float(sx), float(sy), 1.0])


def shear_deg(shx_deg: float, shy_deg: float) -> np.ndarray:
    """3x3 shear; the off-diagonal terms are tangents of the skew angles."""
    m = np.eye(3)
    m[0, 1] = np.tan(np.deg2rad(shx_deg))
    m[1, 0] = np.tan(np.deg2rad(shy_deg))
    return m


def compose(matrices) -> np.ndarray:
    """Compose 3x3 matrices; the last list element is applied to points first.

    compose([A, B, C]) @ p == A @ (B @ (C @ p)).
    """
    mats = [np.asarray(m, dtype=float) for m in matrices]
    if not mats:
        raise ValueError("compose() needs at least one matrix")
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def apply_matrix(m, pts) -> np.ndarray:
    """Apply a 3x3 homogeneous matrix to one point (2,) or a stack (N, 2).

    Divides by the homogeneous w; raises DegenerateW when |w| < 1e-12.
    Returns the same shape that went in.
    """
    m = np.asarray(m, dtype=float)
    p = np.asarray(pts, dtype=float)
    single = p.ndim == 1
    p2 = np.atleast_2d(p)
    w = p2 @ m[2, :2] + m[2, 2]
    if np.any(np.abs(w) < _W_EPS):
        raise DegenerateW(f"homogeneous w below {_W_EPS}")
    xy = p2 @ m[:2, :2].T + m[:2, 2]
    out = xy / w[:, None]
    return out[0] if single else out


def invert_matrix(m) -> np.ndarray:
    """Invert a homogeneous 3x3 whose upper-left 2x2 block is non-singular."""
    m = np.asarray(m, dtype=float)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) <= 1e-12:
        raise SingularMatrix(f"2x2 determinant {det:g} below tolerance")
    return np.linalg.inv(m)


def signed_area(poly) -> float:
    """Shoelace signed area; positive for clockwise-on-screen vertex order."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly) -> float:
    """Absolute shoelace area of a polygon with >= 3 vertices."""
    p = np.asarray(poly, dtype=float)
    if p.shape[0] < 3:
        raise DegenerateGeometry("polygon needs >= 3 vertices")
    return abs(signed_area(p))


def is_convex(poly) -> bool:
    """True when all turns share one sign (collinear runs allowed)."""
    p = np.asarray(poly, dtype=float)
    n = p.shape[0]
    if n < 3:
        return False
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross >= -1e-9) or np.all(cross <= 1e-9))


def convex_intersect(subject, clipper) -> np.ndarray:
    """Sutherland-Hodgman clip of ``subject`` against convex ``clipper``.

    Both polygons convex per the caller's contract (OBBs always are).
    Returns the intersection polygon as an (M, 2) array; an empty (0, 2)
    array means the polygons are disjoint.
    """
    subj = np.asarray(subject, dtype=float)
    clip = np.asarray(clipper, dtype=float)
    if signed_area(clip) < 0:
        clip = clip[::-1]
    out = [tuple(v) for v in subj]
    n = clip.shape[0]
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        # inside == not left of edge a->b under y-down clockwise winding
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        prev = inp[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in inp:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0:
                if prev_side < 0:
                    out.append(_edge_intersection(prev, cur, prev_side, cur_side))
                out.append(cur)
            elif prev_side >= 0:
                out.append(_edge_intersection(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    if len(out) < 3:
        return np.empty((0, 2))
    return np.asarray(out, dtype=float)


def _edge_intersection(p, q, side_p, side_q):
    t = side_p / (side_p - side_q)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def convex_hull(points) -> np.ndarray:
    """Monotone-chain convex hull.

    Output is counter-clockwise in math axes (positive ``signed_area`` under
    the y-down convention) and contains every input point. Raises
    DegenerateGeometry when all points are collinear.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 3:
        raise DegenerateGeometry("hull needs >= 3 points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]
    p = p[np.concatenate(([True], np.any(np.diff(p, axis=0) != 0, axis=1)))]

    def half(points_iter):
        chain: list[np.ndarray] = []
        for pt in points_iter:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], pt) <= 0:
                chain.pop()
            chain.append(pt)
        return chain

    lower = half(p)
    upper = half(p[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometry("all points collinear")
    return np.asarray(hull)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def densify_polygon(poly, max_segment: float) -> np.ndarray:
    """Subdivide edges so no segment exceeds ``max_segment`` pixels.

    Non-linear warps bend straight edges; mapping subdivided edges keeps the
    chord error of the mapped polygon below ~curvature * max_segment^2 / 8.
    """
    p = np.asarray(poly, dtype=float)
    out = []
    n = p.shape[0]
    for i in range(n):
        a = p[i]
        b = p[(i + 1) % n]
        k = max(1, int(np.ceil(np.hypot(*(b - a)) / max_segment)))
        ts = np.arange(k)[:, None] / k
        out.append(a + ts * (b - a))
    return np.vstack(out)


def simplify_polygon(poly, tolerance: float) -> np.ndarray:
    """Douglas-Peucker simplification of a closed polygon.

    Splits the ring at vertex 0 and its farthest vertex, simplifies both
    open chains, and keeps the original polygon whenever simplification
    would degenerate below 3 vertices.
    """
    p = np.asarray(poly, dtype=float)
    n = p.shape[0]
    if n <= 4:
        return p
    split = int(np.argmax(np.hypot(p[:, 0] - p[0, 0], p[:, 1] - p[0, 1])))
    if split == 0:
        return p
    chain_a = _douglas_peucker(p[: split + 1], tolerance)
    chain_b = _douglas_peucker(np.vstack([p[split:], p[:1]]), tolerance)
    out = np.vstack([chain_a[:-1], chain_b[:-1]])
    return out if out.shape[0] >= 3 else p


def _douglas_peucker(chain: np.ndarray, tol: float) -> np.ndarray:
    if chain.shape[0] <= 2:
        return chain
    a, b = chain[0], chain[-1]
    ab = b - a
    length = np.hypot(*ab)
    if length < 1e-12:
        dist = np.hypot(chain[:, 0] - a[0], chain[:, 1] - a[1])
    else:
        dist = np.abs(ab[0] * (chain[:, 1] - a[1]) - ab[1] * (chain[:, 0] - a[0])) / length
    idx = int(np.argmax(dist[1:-1])) + 1
    if dist[idx] <= tol:
        return np.vstack([a, b])
    left = _douglas_peucker(chain[: idx + 1], tol)
    right = _douglas_peucker(chain[idx:], tol)
    return np.vstack([left[:-1], right])


def min_area_rect(poly) -> np.ndarray:
    """Minimum-area enclosing rectangle via rotating calipers over hull edges.

    Returns the 4 corners as an (4, 2) array (consistent winding, arbitrary
    start vertex); contains every input vertex and its area never exceeds the
    axis-aligned bounding box area. Raises DegenerateGeometry for collinear
    input.
    """
    hull = convex_hull(poly)
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 1e-12
    dirs = edges[keep] / lengths[keep, None]

    best_area = np.inf
    best = None
    for ux, uy in dirs:
        # rotate hull so the edge is axis-aligned, take the extent box
        rx = hull[:, 0] * ux + hull[:, 1] * uy
        ry = -hull[:, 0] * uy + hull[:, 1] * ux
        x0, x1 = rx.min(), rx.max()
        y0, y1 = ry.min(), ry.max()
        area = (x1 - x0) * (y1 - y0)
        if area < best_area:
            best_area = area
            corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            back = np.array([[ux, -uy], [uy, ux]])
            best = corners @ back.T
    return best
