"""One sampled instantiation of the two-stage pipeline: an ordered list of
non-linear deformations followed by a composed affine stage.

Forward semantics (used verbatim for annotation points): deformations in
list order, then the affine matrix. Pixels are resampled through the same
plan backwards (affine inverse, then deformation inverses), see raster.

A plan is reproducible from its echo dict alone, which is what the batch
manifest stores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import deformation
from .affine import AffineParams, build_affine
from .deformation import DeformationSpec, DisplacementField


@dataclass
class TransformPlan:
    frame_w: int
    frame_h: int
    deformations: list[DeformationSpec] = field(default_factory=list)
    affine_params: AffineParams | None = None
    derivation: dict | None = None

    def __post_init__(self) -> None:
        if self.affine_params is None:
            self.affine_params = AffineParams(frame_w=self.frame_w, frame_h=self.frame_h)

    @classmethod
    def neutral(cls, frame_w: int, frame_h: int) -> "TransformPlan":
        return cls(frame_w=frame_w, frame_h=frame_h)

    @cached_property
    def fields(self) -> list[DisplacementField]:
        return [deformation.make_field(s) for s in self.deformations]

    @cached_property
    def affine_matrix(self) -> np.ndarray:
        return build_affine(self.affine_params)

    @property
    def has_deformation(self) -> bool:
        return any(not f.is_identity for f in self.fields)

    @property
    def is_identity(self) -> bool:
        return not self.has_deformation and bool(np.array_equal(self.affine_matrix, np.eye(3)))

    def forward_points(self, pts: np.ndarray) -> np.ndarray:
        """Map points exactly as the pipeline defines: deformations then affine."""
        from . import geometry

        p = deformation.chain_forward(self.fields, pts)
        return geometry.apply_matrix(self.affine_matrix, p)

    def to_dict(self) -> dict:
        return {
            "frame_w": self.frame_w,
            "frame_h": self.frame_h,
            "deformations": [s.to_dict() for s in self.deformations],
            "affine": self.affine_params.to_dict(),
            "derivation": self.derivation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformPlan":
        return cls(
            frame_w=d["frame_w"],
            frame_h=d["frame_h"],
            deformations=[DeformationSpec.from_dict(s) for s in d["deformations"]],
            affine_params=AffineParams.from_dict(d["affine"]),
            derivation=d.get("derivation"),
        )
