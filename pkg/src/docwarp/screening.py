"""Automated triage of corrupted augmentations before human review.

Screening flags, never deletes: the ground truth for validity is the human
reviewer. Flags are serialized into the batch manifest so the review UI can
sort flagged candidates first.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import geometry
from .annotation import AnnotatedDocument, Dropped, Shape
from .errors import DegenerateGeometry


@dataclass(frozen=True)
class ScreeningThresholds:
    """Config-overridable triage thresholds."""

    min_area_ratio: float = 0.2  # transformed area >= ratio * original area
    max_aspect_growth: float = 4.0  # aspect ratio growth factor
    min_visible_fraction: float = 0.6  # shapes surviving clipping / originals
    max_nonconverged: float = 0.005  # warp inverse non-convergence fraction

    @classmethod
    def from_dict(cls, d: dict) -> "ScreeningThresholds":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class ShapeFlags:
    self_intersecting: bool = False
    sub_min_area: bool = False
    aspect_blowup: bool = False
    out_of_frame_excess: bool = False

    @property
    def any(self) -> bool:
        return self.self_intersecting or self.sub_min_area or self.aspect_blowup or self.out_of_frame_excess


@dataclass
class ScreeningReport:
    shape_flags: list[ShapeFlags] = field(default_factory=list)
    visible_shape_fraction_low: bool = False
    nonconverged_pixels_high: bool = False

    @property
    def flagged(self) -> bool:
        return (
            self.visible_shape_fraction_low
            or self.nonconverged_pixels_high
            or any(f.any for f in self.shape_flags)
        )

    @property
    def overall(self) -> str:
        return "flagged" if self.flagged else "clean"

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "visible_shape_fraction_low": self.visible_shape_fraction_low,
            "nonconverged_pixels_high": self.nonconverged_pixels_high,
            "shapes": [asdict(f) for f in self.shape_flags],
        }


def is_self_intersecting(poly) -> bool:
    """True iff any two non-adjacent edges properly (strictly) intersect."""
    p = np.asarray(poly, dtype=float)
    n = p.shape[0]
    if n < 4:
        return False
    for i in range(n):
        a0, a1 = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b0, b1 = p[j], p[(j + 1) % n]
            if _segments_cross(a0, a1, b0, b1):
                return True
    return False


def _segments_cross(a0, a1, b0, b1) -> bool:
    d1 = _orient(b0, b1, a0)
    d2 = _orient(b0, b1, a1)
    d3 = _orient(a0, a1, b0)
    d4 = _orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _orient(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _aspect(poly) -> float:
    rect = geometry.min_area_rect(poly)
    e0 = float(np.hypot(*(rect[1] - rect[0])))
    e1 = float(np.hypot(*(rect[2] - rect[1])))
    lo, hi = sorted((e0, e1))
    return hi / lo if lo > 0 else np.inf


def screen_document(
    before: AnnotatedDocument,
    after,
    nonconverged_fraction: float = 0.0,
    thresholds: ScreeningThresholds = ScreeningThresholds(),
) -> ScreeningReport:
    """Flag per-shape and per-document corruption signals.

    ``after`` is the clip-outcome list aligned by position with
    ``before.shapes``: a transformed Shape or a Dropped tombstone per slot.
    Pure function; an identity augmentation always screens clean.
    """
    if len(before.shapes) != len(after):
        raise ValueError(f"shape lists not aligned: {len(before.shapes)} vs {len(after)}")
    report = ScreeningReport()
    survivors = 0
    for orig, outcome in zip(before.shapes, after):
        flags = ShapeFlags()
        if isinstance(outcome, Dropped):
            flags.out_of_frame_excess = True
        else:
            survivors += 1
            poly = outcome.polygon
            flags.self_intersecting = is_self_intersecting(poly)
            area_before = geometry.polygon_area(orig.polygon)
            area_after = geometry.polygon_area(poly)
            if area_before > 0 and area_after / area_before < thresholds.min_area_ratio:
                flags.sub_min_area = True
            try:
                aspect_before = _aspect(orig.polygon)
                aspect_after = _aspect(poly)
                if np.isfinite(aspect_before) and aspect_after / aspect_before > thresholds.max_aspect_growth:
                    flags.aspect_blowup = True
            except DegenerateGeometry:
                # collapsed to a line: the most extreme aspect blowup there is
                flags.aspect_blowup = True
        report.shape_flags.append(flags)
    if before.shapes and survivors / len(before.shapes) < thresholds.min_visible_fraction:
        report.visible_shape_fraction_low = True
    if nonconverged_fraction > thresholds.max_nonconverged:
        report.nonconverged_pixels_high = True
    return report
