"""Oriented-bounding-box ground truth: normalized 4-vertex records and the
plain-text file format.

Record line schema (whitespace separated, '.' decimal separator, one record
per line, no header):

    ground truth:  class x1 y1 x2 y2 x3 y3 x4 y4
    prediction:    class confidence x1 y1 x2 y2 x3 y3 x4 y4

Vertices are normalized to [0, 1] by the frame dimensions, clockwise in
y-down image axes starting from the canonical "top-left" vertex: the one
minimizing x + y, ties broken by smaller y then smaller x (computed in
pixel space, before normalization). Output files are stem-matched .txt
files, one per image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .annotation import LayoutLabel
from .errors import NotARectangle, OutOfRange, ParseError

_ORTHO_TOL = 1e-6


@dataclass
class ObbRecord:
    class_index: int
    vertices: np.ndarray  # (4, 2) in [0, 1]
    confidence: float | None = None

    @property
    def label(self) -> LayoutLabel:
        return LayoutLabel.from_index(self.class_index)


def canonical_order(rect) -> np.ndarray:
    """Reorder 4 rectangle vertices clockwise from the canonical top-left.

    Clockwise in y-down axes means positive shoelace ``signed_area``; the
    start vertex minimizes x + y with ties broken by smaller y, then
    smaller x. Verifies rectangularity (adjacent edges orthogonal within
    1e-6 relative) and raises NotARectangle otherwise. Idempotent.
    """
    p = np.asarray(rect, dtype=float)
    if p.shape != (4, 2):
        raise NotARectangle(f"expected 4 vertices, got shape {p.shape}")
    edges = np.roll(p, -1, axis=0) - p
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths <= 0):
        raise NotARectangle("repeated vertices")
    for i in range(4):
        a = edges[i]
        b = edges[(i + 1) % 4]
        cos = abs(np.dot(a, b)) / (lengths[i] * lengths[(i + 1) % 4])
        if cos > _ORTHO_TOL:
            raise NotARectangle(f"adjacent edges not orthogonal (|cos|={cos:.2e})")
    if geometry.signed_area(p) < 0:
        p = p[::-1]
    s = p[:, 0] + p[:, 1]
    scale = max(1.0, float(np.max(np.abs(p))))
    candidates = np.flatnonzero(s <= s.min() + 1e-9 * scale)
    if len(candidates) > 1:
        order = np.lexsort((p[candidates, 0], p[candidates, 1]))
        start = int(candidates[order[0]])
    else:
        start = int(candidates[0])
    return np.roll(p, -start, axis=0)


def polygon_to_obb(poly, frame_w: float, frame_h: float, label: LayoutLabel) -> ObbRecord:
    """Minimum-area rectangle of a polygon as a normalized, clamped OBB record.

    Raises DegenerateGeometry for collinear input (propagated from the
    rectangle fit). Coordinates that stray slightly outside the frame are
    clamped into [0, 1] rather than rejected; larger excursions are the
    clipping stage's job.
    """
    rect = geometry.min_area_rect(poly)
    rect = canonical_order(rect)
    norm = rect / np.array([float(frame_w), float(frame_h)])
    norm = np.clip(norm, 0.0, 1.0)
    return ObbRecord(class_index=label.index, vertices=norm)


def obb_to_polygon(record: ObbRecord, frame_w: float, frame_h: float) -> np.ndarray:
    """Denormalize a record's vertices back to pixel coordinates."""
    return record.vertices * np.array([float(frame_w), float(frame_h)])


def emit_obb_file(records) -> str:
    """One record per line; predictions additionally carry their confidence."""
    lines = []
    for r in records:
        coords = " ".join(f"{v:.6f}" for v in np.asarray(r.vertices).ravel())
        if r.confidence is not None:
            lines.append(f"{r.class_index} {r.confidence:.6f} {coords}")
        else:
            lines.append(f"{r.class_index} {coords}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_obb_file(text: str, is_prediction: bool = False) -> list[ObbRecord]:
    """Parse an OBB text file; raises ParseError/OutOfRange with line numbers."""
    records = []
    expected = 10 if is_prediction else 9
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != expected:
            raise ParseError(line_no, f"expected {expected} fields, got {len(tokens)}")
        try:
            class_index = int(tokens[0])
            values = [float(t) for t in tokens[1:]]
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if class_index < 0:
            raise OutOfRange(line_no, f"negative class index {class_index}")
        confidence = None
        if is_prediction:
            confidence, values = values[0], values[1:]
            if not 0.0 <= confidence <= 1.0:
                raise OutOfRange(line_no, f"confidence {confidence} outside [0, 1]")
        coords = np.asarray(values).reshape(4, 2)
        if np.any(coords < -1e-9) or np.any(coords > 1 + 1e-9):
            raise OutOfRange(line_no, "vertex coordinate outside [0, 1]")
        records.append(
            ObbRecord(class_index=class_index, vertices=np.clip(coords, 0.0, 1.0), confidence=confidence)
        )
    return records
