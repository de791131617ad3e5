from __future__ import annotations

import numpy as np
import pytest

from docwarp import geometry
from docwarp.affine import AffineParams, build_affine, invert_affine, perspective_approx
from docwarp.errors import InvalidScale, SingularMatrix


def params(**kw) -> AffineParams:
    kw.setdefault("frame_w", 100)
    kw.setdefault("frame_h", 100)
    return AffineParams(**kw)


class TestBuildAffine:
    def test_neutral_is_identity(self):
        assert np.array_equal(build_affine(params()), np.eye(3))

    def test_rotation_90_on_square_frame(self):
        m = build_affine(params(rotation_deg=90))
        assert np.allclose(geometry.apply_matrix(m, [50.0, 0.0]), [100.0, 50.0], atol=1e-9)
        assert np.allclose(geometry.apply_matrix(m, [50.0, 50.0]), [50.0, 50.0], atol=1e-12)

    def test_center_anchored_scaling(self):
        m = build_affine(params(scale_x=2, scale_y=2))
        assert np.allclose(geometry.apply_matrix(m, [0.0, 0.0]), [-50.0, -50.0], atol=1e-9)

    def test_invalid_scale(self):
        with pytest.raises(InvalidScale):
            build_affine(params(scale_x=0.0))
        with pytest.raises(InvalidScale):
            build_affine(params(scale_y=-1.0))

    def test_center_fixed_point_without_translation(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            p = params(
                frame_w=rng.integers(50, 2000),
                frame_h=rng.integers(50, 2000),
                flip_h=bool(rng.integers(2)),
                flip_v=bool(rng.integers(2)),
                scale_x=rng.uniform(0.5, 2),
                scale_y=rng.uniform(0.5, 2),
                shear_x_deg=rng.uniform(-30, 30),
                shear_y_deg=rng.uniform(-30, 30),
                rotation_deg=rng.uniform(-180, 180),
                perspective_x=rng.uniform(-0.002, 0.002),
                perspective_y=rng.uniform(-0.002, 0.002),
            )
            center = np.array([p.frame_w / 2, p.frame_h / 2])
            out = geometry.apply_matrix(build_affine(p), center)
            assert np.allclose(out, center, atol=1e-9)

    def test_elementary_equals_conjugated_matrix(self):
        # one non-neutral parameter == elementary matrix conjugated by the
        # center translation
        cases = [
            (params(rotation_deg=37), geometry.rotation_deg(37)),
            (params(scale_x=1.7, scale_y=0.6), geometry.scaling(1.7, 0.6)),
            (params(shear_x_deg=11, shear_y_deg=-4), geometry.shear_deg(11, -4)),
            (params(flip_h=True), geometry.scaling(-1, 1)),
            (params(flip_v=True), geometry.scaling(1, -1)),
            (params(perspective_x=0.001, perspective_y=0.0005), perspective_approx(0.001, 0.0005, 100, 100)),
        ]
        for p, elementary in cases:
            expected = geometry.compose(
                [geometry.translation(50, 50), elementary, geometry.translation(-50, -50)]
            )
            assert np.allclose(build_affine(p), expected, atol=1e-12)

    def test_user_translation_appended_after_center_restore(self):
        m = build_affine(params(translate_x=7, translate_y=-3))
        expected = geometry.translation(7, -3)
        assert np.allclose(m, expected, atol=1e-12)

    def test_perspective_identity_at_zero(self):
        assert np.array_equal(perspective_approx(0.0, 0.0, 640, 480), np.eye(3))


class TestInvertAffine:
    def test_identity(self):
        assert np.allclose(invert_affine(np.eye(3)), np.eye(3))

    def test_translation(self):
        inv = invert_affine(geometry.translation(10, 5))
        assert np.allclose(inv, geometry.translation(-10, -5), atol=1e-12)

    def test_round_trip_random_points(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            p = params(
                scale_x=rng.uniform(0.5, 2),
                scale_y=rng.uniform(0.5, 2),
                shear_x_deg=rng.uniform(-20, 20),
                rotation_deg=rng.uniform(-90, 90),
                translate_x=rng.uniform(-30, 30),
                translate_y=rng.uniform(-30, 30),
            )
            m = build_affine(p)
            inv = invert_affine(m)
            assert np.max(np.abs(m @ inv - np.eye(3))) < 1e-9
            pts = rng.uniform(-200, 200, size=(20, 2))
            round_trip = geometry.apply_matrix(inv, geometry.apply_matrix(m, pts))
            assert np.max(np.abs(round_trip - pts)) < 1e-9

    def test_singular_raises(self):
        m = np.eye(3)
        m[0, 0] = 0.0
        m[1, 1] = 0.0
        m[0, 1] = 0.0
        m[1, 0] = 0.0
        with pytest.raises(SingularMatrix):
            invert_affine(m)

    def test_inverse_of_build_composes_to_identity_on_points(self):
        rng = np.random.default_rng(5)
        p = params(rotation_deg=25, scale_x=1.2, scale_y=0.8, shear_y_deg=6, perspective_x=0.001)
        m = build_affine(p)
        pts = rng.uniform(0, 100, size=(50, 2))
        back = geometry.apply_matrix(invert_affine(m), geometry.apply_matrix(m, pts))
        assert np.max(np.abs(back - pts)) < 1e-9
