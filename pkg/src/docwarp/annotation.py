"""LabelMe-style annotation ingestion, transformation and export.

The label scheme is fixed: 14 layout classes with class indices 0-13 in
alphabetical order. Parsing is case-sensitive exact match and anything
outside the scheme is rejected so downstream class indices stay stable.

Shapes are flat (no nested layout units). Rectangles are expanded to
four-corner polygons at ingestion; everything downstream works on polygons
only. Unknown top-level JSON fields are carried through verbatim so a
parse -> write round-trip never loses foreign metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import geometry
from .errors import MalformedShape, MissingField, UnknownLabel
from .plan import TransformPlan


class LayoutLabel(str, Enum):
    CAPTION = "caption"
    CODE_BLOCK = "code-block"
    EQUATION_BLOCK = "equation-block"
    FIGURE = "figure"
    FOOTNOTE = "footnote"
    FORM = "form"
    IMAGE = "image"
    LIST_ITEM = "list-item"
    PAGE_FOOTER = "page-footer"
    PAGE_HEADER = "page-header"
    SECTION_HEADER = "section-header"
    TABLE = "table"
    TABLE_OF_CONTENTS = "table-of-contents"
    TEXT = "text"

    @property
    def index(self) -> int:
        return _LABEL_INDEX[self]

    @classmethod
    def parse(cls, value: str) -> "LayoutLabel":
        try:
            return cls(value)
        except ValueError:
            raise UnknownLabel(value) from None

    @classmethod
    def from_index(cls, index: int) -> "LayoutLabel":
        return LABELS[index]


LABELS: tuple[LayoutLabel, ...] = tuple(LayoutLabel)
_LABEL_INDEX = {lbl: i for i, lbl in enumerate(LABELS)}


@dataclass
class Shape:
    label: LayoutLabel
    polygon: np.ndarray  # (N, 2) pixel coords, N >= 3
    source_kind: str = "polygon"  # "polygon" | "rectangle"


@dataclass
class Dropped:
    """Tombstone for a shape removed by clipping; keeps list positions aligned."""

    label: LayoutLabel
    reason: str


@dataclass
class AnnotatedDocument:
    image_path: str
    image_w: int
    image_h: int
    shapes: list[Shape] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def rect_to_polygon(p0, p1) -> np.ndarray:
    """Expand two opposite corners to a four-corner polygon, clockwise in
    y-down axes starting at the top-left corner."""
    x0, x1 = sorted((float(p0[0]), float(p1[0])))
    y0, y1 = sorted((float(p0[1]), float(p1[1])))
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def parse_labelme(json_text: str) -> AnnotatedDocument:
    """Parse a LabelMe JSON document.

    Raises MissingField / MalformedShape / UnknownLabel; rectangles are
    expanded via rect_to_polygon, polygon vertex order is preserved.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedShape(-1, f"invalid JSON: {exc}") from exc
    for key in ("imagePath", "imageWidth", "imageHeight", "shapes"):
        if key not in data:
            raise MissingField(key)
    shapes: list[Shape] = []
    for i, raw in enumerate(data["shapes"]):
        if not isinstance(raw, dict):
            raise MalformedShape(i, "shape entry is not an object")
        for key in ("label", "points"):
            if key not in raw:
                raise MalformedShape(i, f"missing {key!r}")
        label = LayoutLabel.parse(raw["label"])
        try:
            pts = np.asarray(raw["points"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise MalformedShape(i, f"non-numeric points: {exc}") from exc
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise MalformedShape(i, f"points must be an Nx2 list, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise MalformedShape(i, "non-finite coordinates")
        kind = raw.get("shape_type", "polygon")
        if kind == "rectangle":
            if pts.shape[0] != 2:
                raise MalformedShape(i, f"rectangle needs exactly 2 points, got {pts.shape[0]}")
            poly = rect_to_polygon(pts[0], pts[1])
        elif kind == "polygon":
            if pts.shape[0] < 3:
                raise MalformedShape(i, f"polygon needs >= 3 points, got {pts.shape[0]}")
            poly = pts
        else:
            raise MalformedShape(i, f"unsupported shape_type {kind!r}")
        shapes.append(Shape(label=label, polygon=poly, source_kind=kind))
    known = {"imagePath", "imageWidth", "imageHeight", "shapes"}
    extra = {k: v for k, v in data.items() if k not in known}
    return AnnotatedDocument(
        image_path=str(data["imagePath"]),
        image_w=int(data["imageWidth"]),
        image_h=int(data["imageHeight"]),
        shapes=shapes,
        extra=extra,
    )


def write_labelme(doc: AnnotatedDocument) -> str:
    """Serialize a document back to LabelMe JSON.

    Expanded rectangles come back out as polygons (shape_type "polygon");
    floats keep full precision so a parse round-trip is exact.
    """
    data = dict(doc.extra)
    data["imagePath"] = doc.image_path
    data["imageWidth"] = doc.image_w
    data["imageHeight"] = doc.image_h
    data["shapes"] = [
        {
            "label": s.label.value,
            "points": [[float(x), float(y)] for x, y in s.polygon],
            "shape_type": "polygon",
        }
        for s in doc.shapes
    ]
    return json.dumps(data, indent=2)


# chord-sag budget (px) for mapped edges and the simplification tolerance
# applied afterwards; both stay well inside the correspondence tolerances
_CHORD_SAG_BUDGET = 0.5
_SIMPLIFY_TOL = 0.5


def _densify_segment_length(plan: TransformPlan) -> float:
    curv = sum(f.curvature for f in plan.fields if not f.is_identity)
    if curv <= 0:
        return np.inf
    return float(np.clip(np.sqrt(8.0 * _CHORD_SAG_BUDGET / curv), 8.0, 64.0))


def transform_shapes(doc: AnnotatedDocument, plan: TransformPlan) -> AnnotatedDocument:
    """Map every shape vertex through the plan's forward semantics.

    Identical order as the pixels' forward pass: deformations first, affine
    second. Labels never change. Affine-only plans map the original
    vertices one to one (straight edges stay straight, so vertex counts are
    unchanged). Plans with non-linear deformations subdivide edges first so
    the mapped polygon follows the curved ink (chord sag <= ~0.5 px), then
    simplify the result, letting the vertex count adapt to the actual
    curvature.
    """
    densify = plan.has_deformation
    seg = _densify_segment_length(plan) if densify else np.inf
    out = []
    for s in doc.shapes:
        poly = s.polygon
        if densify and np.isfinite(seg):
            poly = geometry.densify_polygon(poly, seg)
        mapped = plan.forward_points(poly)
        if densify:
            mapped = geometry.simplify_polygon(mapped, _SIMPLIFY_TOL)
        out.append(replace(s, polygon=mapped))
    return AnnotatedDocument(
        image_path=doc.image_path,
        image_w=doc.image_w,
        image_h=doc.image_h,
        shapes=out,
        extra=dict(doc.extra),
    )


def clip_shape(shape: Shape, frame_w: float, frame_h: float, min_visible: float = 0.3):
    """Clip a shape to the frame; returns the clipped Shape or a Dropped tombstone.

    Convex polygons are clipped exactly against the frame rectangle;
    non-convex ones fall back to per-vertex clamping. The shape is dropped
    when visible area / original area < min_visible.
    """
    if not 0 < min_visible <= 1:
        raise ValueError(f"min_visible must be in (0, 1], got {min_visible}")
    poly = np.asarray(shape.polygon, dtype=float)
    inside = (
        (poly[:, 0] >= 0) & (poly[:, 0] <= frame_w) & (poly[:, 1] >= 0) & (poly[:, 1] <= frame_h)
    )
    if np.all(inside):
        return shape
    original_area = geometry.polygon_area(poly)
    if original_area <= 0:
        return Dropped(shape.label, "degenerate")
    frame = np.array([[0.0, 0.0], [frame_w, 0.0], [frame_w, frame_h], [0.0, frame_h]])
    if geometry.is_convex(poly):
        clipped = geometry.convex_intersect(poly, frame)
        if clipped.shape[0] < 3:
            return Dropped(shape.label, "out_of_frame")
    else:
        clipped = np.column_stack(
            (np.clip(poly[:, 0], 0, frame_w), np.clip(poly[:, 1], 0, frame_h))
        )
    visible = geometry.polygon_area(clipped) if clipped.shape[0] >= 3 else 0.0
    if visible <= 0:
        return Dropped(shape.label, "out_of_frame")
    if visible / original_area < min_visible:
        return Dropped(shape.label, "below_min_visible")
    return replace(shape, polygon=clipped)
