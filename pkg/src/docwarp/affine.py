"""Composed affine transform built from named parameters.

The full map is assembled center-anchored, right-to-left:

    M = T(center) . T(user) . P . R(phi) . Sh . S . F . T(-center)

so with zero user translation the frame center is a fixed point for every
other parameter choice. ``P`` is the affine perspective surrogate: a true
projective map with bottom row (px, py, 1) linearized at the frame center,

    P = [[1, -px*h/2, 0],
         [-py*w/2, 1, 0],
         [0, 0, 1]]

which is the identity at px = py = 0 and stays affine by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, fields

import numpy as np

from . import geometry
from .errors import InvalidScale


@dataclass(frozen=True)
class AffineParams:
    """Parameter set for one sampled affine stage.

    Angles in degrees, translations in pixels, scale factors dimensionless
    and strictly positive, perspective coefficients dimensionless (small).
    frame_w/frame_h are the pixel dimensions of the page being transformed.
    """

    frame_w: float
    frame_h: float
    flip_h: bool = False
    flip_v: bool = False
    scale_x: float = 1.0
    scale_y: float = 1.0
    shear_x_deg: float = 0.0
    shear_y_deg: float = 0.0
    rotation_deg: float = 0.0
    perspective_x: float = 0.0
    perspective_y: float = 0.0
    translate_x: float = 0.0
    translate_y: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AffineParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def is_neutral(self) -> bool:
        return (
            not self.flip_h
            and not self.flip_v
            and self.scale_x == 1.0
            and self.scale_y == 1.0
            and self.shear_x_deg == 0.0
            and self.shear_y_deg == 0.0
            and self.rotation_deg == 0.0
            and self.perspective_x == 0.0
            and self.perspective_y == 0.0
            and self.translate_x == 0.0
            and self.translate_y == 0.0
        )


def perspective_approx(px: float, py: float, frame_w: float, frame_h: float) -> np.ndarray:
    """Affine linearization of a projective map with bottom row (px, py, 1)."""
    m = np.eye(3)
    m[0, 1] = -px * frame_h / 2.0
    m[1, 0] = -py * frame_w / 2.0
    return m


def build_affine(params: AffineParams) -> np.ndarray:
    """Build the composed 3x3 matrix for one AffineParams set.

    Raises InvalidScale when either scale factor is <= 0.
    """
    if params.scale_x <= 0 or params.scale_y <= 0:
        raise InvalidScale(f"scale factors must be > 0, got ({params.scale_x}, {params.scale_y})")
    if params.is_neutral():
        return np.eye(3)
    cx, cy = params.frame_w / 2.0, params.frame_h / 2.0
    flip = geometry.scaling(-1.0 if params.flip_h else 1.0, -1.0 if params.flip_v else 1.0)
    return geometry.compose(
        [
            geometry.translation(cx, cy),
            geometry.translation(params.translate_x, params.translate_y),
            perspective_approx(params.perspective_x, params.perspective_y, params.frame_w, params.frame_h),
            geometry.rotation_deg(params.rotation_deg),
            geometry.shear_deg(params.shear_x_deg, params.shear_y_deg),
            geometry.scaling(params.scale_x, params.scale_y),
            flip,
            geometry.translation(-cx, -cy),
        ]
    )


def invert_affine(m) -> np.ndarray:
    """Inverse of an affine 3x3; raises SingularMatrix below tolerance."""
    return geometry.invert_matrix(m)
