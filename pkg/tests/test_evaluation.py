from __future__ import annotations

import json

import numpy as np
import pytest

from docwarp.annotation import LABELS, LayoutLabel
from docwarp.errors import DocwarpError
from docwarp.evaluation import (
    IOU_THRESHOLDS,
    average_precision,
    evaluate_dataset,
    match_detections,
    rotated_iou,
)
from docwarp.obb import ObbRecord, emit_obb_file

from oracles import ap_101, greedy_match, quad_iou_pixelspace


def rect_record(cls, x0, y0, x1, y1, frame_w=1000.0, frame_h=1000.0, conf=None) -> ObbRecord:
    verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]) / [frame_w, frame_h]
    return ObbRecord(class_index=cls, vertices=verts, confidence=conf)


def rotated_record(cls, cx, cy, w, h, angle, frame=1000.0, conf=None) -> ObbRecord:
    ux, uy = np.cos(angle), np.sin(angle)
    rect = np.array(
        [
            [cx - w * ux + h * uy, cy - w * uy - h * ux],
            [cx + w * ux + h * uy, cy + w * uy - h * ux],
            [cx + w * ux - h * uy, cy + w * uy + h * ux],
            [cx - w * ux - h * uy, cy - w * uy + h * ux],
        ]
    )
    return ObbRecord(class_index=cls, vertices=np.clip(rect / frame, 0, 1), confidence=conf)


class TestRotatedIou:
    def test_identical_boxes(self):
        a = rect_record(0, 100, 100, 300, 250)
        assert rotated_iou(a, a, 1000, 1000) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        a = rect_record(0, 0, 0, 100, 100)
        b = rect_record(0, 500, 500, 600, 600)
        assert rotated_iou(a, b, 1000, 1000) == 0.0

    def test_unit_square_vs_45_rotation(self):
        # analytic value: sqrt(2)/2
        a = rect_record(0, 400, 400, 500, 500)
        b = rotated_record(0, 450, 450, 50, 50, np.pi / 4)
        iou = rotated_iou(a, b, 1000, 1000)
        assert iou == pytest.approx(np.sqrt(2) / 2, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rotated_record(0, *rng.uniform(200, 800, 2), *rng.uniform(20, 120, 2), rng.uniform(0, np.pi))
            b = rotated_record(0, *rng.uniform(200, 800, 2), *rng.uniform(20, 120, 2), rng.uniform(0, np.pi))
            ab = rotated_iou(a, b, 1000, 1000)
            ba = rotated_iou(b, a, 1000, 1000)
            assert ab == pytest.approx(ba, abs=1e-12)
            assert 0.0 <= ab <= 1.0

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(1)
        for i in range(5):
            a = rotated_record(0, *rng.uniform(300, 700, 2), *rng.uniform(60, 150, 2), rng.uniform(0, np.pi))
            b = rotated_record(0, *rng.uniform(300, 700, 2), *rng.uniform(60, 150, 2), rng.uniform(0, np.pi))
            engine = rotated_iou(a, b, 1000, 1000)
            mc = quad_iou_pixelspace(a.vertices * 1000, b.vertices * 1000, seed=i)
            assert engine == pytest.approx(mc, abs=5e-3)

    def test_degenerate_box_is_zero(self):
        a = rect_record(0, 100, 100, 100, 250)  # zero width
        b = rect_record(0, 90, 90, 260, 260)
        assert rotated_iou(a, b, 1000, 1000) == 0.0


class TestMatchDetections:
    def test_exact_match_is_tp(self):
        gt = [rect_record(0, 100, 100, 300, 250)]
        det = [rect_record(0, 100, 100, 300, 250, conf=0.9)]
        matches = match_detections(gt, det, 0.5, 1000, 1000)
        assert matches == [(0, 0)]

    def test_two_dets_one_gt(self):
        gt = [rect_record(0, 100, 100, 300, 250)]
        dets = [
            rect_record(0, 105, 102, 302, 252, conf=0.6),
            rect_record(0, 98, 99, 299, 251, conf=0.9),
        ]
        matches = match_detections(gt, dets, 0.5, 1000, 1000)
        # higher-confidence det (index 1) matches; the other is FP
        assert matches[0] == (1, 0)
        assert matches[1] == (0, None)

    def test_class_aware(self):
        gt = [rect_record(1, 100, 100, 300, 250)]
        det = [rect_record(0, 100, 100, 300, 250, conf=0.9)]
        assert match_detections(gt, det, 0.5, 1000, 1000)[0][1] is None

    def test_confidence_ties_keep_input_order(self):
        gt = [rect_record(0, 100, 100, 300, 250)]
        dets = [
            rect_record(0, 100, 100, 300, 250, conf=0.5),
            rect_record(0, 100, 100, 300, 250, conf=0.5),
        ]
        matches = match_detections(gt, dets, 0.5, 1000, 1000)
        assert matches[0] == (0, 0)
        assert matches[1] == (1, None)

    def test_against_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(30):
            n_gt = int(rng.integers(1, 4))
            n_det = int(rng.integers(1, 4))
            gts = [
                rotated_record(0, *rng.uniform(200, 800, 2), *rng.uniform(40, 150, 2), rng.uniform(0, np.pi))
                for _ in range(n_gt)
            ]
            dets = [
                rotated_record(0, *rng.uniform(200, 800, 2), *rng.uniform(40, 150, 2), rng.uniform(0, np.pi), conf=float(rng.uniform(0, 1)))
                for _ in range(n_det)
            ]
            iou_matrix = [[rotated_iou(d, g, 1000, 1000) for g in gts] for d in dets]
            for thr in (0.3, 0.5, 0.75):
                engine = match_detections(gts, dets, thr, 1000, 1000)
                engine_flags = [gi is not None for _, gi in engine]
                oracle_flags = greedy_match(gts, [d.confidence for d in dets], iou_matrix, thr)
                assert engine_flags == oracle_flags, (trial, thr)


class TestAveragePrecision:
    def test_single_tp(self):
        assert average_precision([True], 1) == pytest.approx(1.0, abs=1e-12)

    def test_two_gt_one_tp_is_51_over_101(self):
        ap = average_precision([True], 2)
        assert ap == pytest.approx(51 / 101, abs=1e-12)

    def test_no_dets(self):
        assert average_precision([], 3) == 0.0

    def test_no_gt_skipped(self):
        assert average_precision([False, False], 0) is None

    def test_matches_oracle_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(0, 12))
            flags = [bool(rng.integers(2)) for _ in range(n)]
            n_gt = int(rng.integers(max(1, sum(flags)), 15))
            assert average_precision(flags, n_gt) == ap_101(flags, n_gt)


def write_dataset(tmp_path, gt: dict, pred: dict, dims=(1000, 1000)):
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir(exist_ok=True)
    pred_dir.mkdir(exist_ok=True)
    for stem, records in gt.items():
        (gt_dir / f"{stem}.txt").write_text(emit_obb_file(records))
    for stem, records in pred.items():
        (pred_dir / f"{stem}.txt").write_text(emit_obb_file(records))
    (gt_dir / "dims.json").write_text(json.dumps({s: list(dims) for s in gt}))
    return gt_dir, pred_dir


class TestEvaluateDataset:
    def test_perfect_predictions(self, tmp_path):
        gt = {
            "a": [rect_record(0, 100, 100, 300, 250), rect_record(2, 400, 400, 600, 600)],
            "b": [rect_record(0, 50, 50, 200, 200)],
        }
        pred = {
            s: [ObbRecord(r.class_index, r.vertices, confidence=1.0) for r in records]
            for s, records in gt.items()
        }
        report = evaluate_dataset(*write_dataset(tmp_path, gt, pred))
        for c in report.classes:
            if c.instances:
                assert c.precision == 1.0
                assert c.recall == 1.0
                assert all(v == 1.0 for v in c.ap_by_threshold.values())
        assert report.map50 == 1.0
        assert report.map_coco == 1.0

    def test_empty_predictions(self, tmp_path):
        gt = {"a": [rect_record(0, 100, 100, 300, 250)]}
        report = evaluate_dataset(*write_dataset(tmp_path, gt, {}))
        caption = report.classes[0]
        assert caption.instances == 1
        assert caption.recall == 0.0
        assert all(v == 0.0 for v in caption.ap_by_threshold.values())

    def test_localization_error_at_iou_06(self, tmp_path):
        # one det overlapping its GT at IoU ~ 0.6: counts at 0.5, not at 0.75
        gt_box = rect_record(0, 100, 100, 300, 300)
        det_box = rect_record(0, 100, 142, 300, 342, conf=0.9)  # shifted down
        iou = rotated_iou(gt_box, det_box, 1000, 1000)
        assert 0.55 < iou < 0.70
        gt = {
            "a": [gt_box, rect_record(1, 500, 500, 700, 700)],
            "b": [rect_record(2, 50, 50, 250, 250)],
        }
        pred = {
            "a": [det_box, ObbRecord(1, gt["a"][1].vertices, confidence=0.8)],
            "b": [ObbRecord(2, gt["b"][0].vertices, confidence=0.95)],
        }
        report = evaluate_dataset(*write_dataset(tmp_path, gt, pred))
        c0 = report.classes[0]
        assert c0.ap_by_threshold[0.5] == pytest.approx(1.0, abs=1e-12)
        assert c0.ap_by_threshold[0.75] == pytest.approx(ap_101([False], 1), abs=1e-12)
        # the other classes stay perfect at every threshold
        for idx in (1, 2):
            assert report.classes[idx].map_coco == 1.0

    def test_ap_non_increasing_in_threshold(self, tmp_path):
        rng = np.random.default_rng(4)
        gt = {}
        pred = {}
        for i in range(4):
            stem = f"img{i}"
            gt[stem] = [
                rotated_record(int(rng.integers(0, 3)), *rng.uniform(200, 800, 2), *rng.uniform(40, 140, 2), rng.uniform(0, np.pi))
                for _ in range(int(rng.integers(1, 4)))
            ]
            pred[stem] = [
                rotated_record(int(rng.integers(0, 3)), *rng.uniform(200, 800, 2), *rng.uniform(40, 140, 2), rng.uniform(0, np.pi), conf=float(rng.uniform(0.1, 1)))
                for _ in range(int(rng.integers(0, 5)))
            ]
        report = evaluate_dataset(*write_dataset(tmp_path, gt, pred))
        for c in report.classes:
            aps = [c.ap_by_threshold[t] for t in IOU_THRESHOLDS]
            assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))

    def test_file_order_invariance(self, tmp_path):
        rng = np.random.default_rng(5)
        gt = {}
        pred = {}
        for i in range(3):
            stem = f"x{i}"
            gt[stem] = [rect_record(0, 100, 100, 300, 300)]
            pred[stem] = [rect_record(0, 110, 110, 310, 310, conf=float(rng.uniform()))]
        d1 = evaluate_dataset(*write_dataset(tmp_path, gt, pred)).to_dict()
        # same records, different write order
        tmp2 = tmp_path / "again"
        tmp2.mkdir()
        items = list(gt.items())[::-1]
        d2 = evaluate_dataset(*write_dataset(tmp2, dict(items), pred)).to_dict()
        assert d1 == d2

    def test_missing_dims_is_an_error(self, tmp_path):
        gt_dir = tmp_path / "gt"
        pred_dir = tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        (gt_dir / "a.txt").write_text(emit_obb_file([rect_record(0, 1, 1, 5, 5)]))
        with pytest.raises(DocwarpError):
            evaluate_dataset(gt_dir, pred_dir)

    def test_class_index_out_of_label_range(self, tmp_path):
        gt = {"a": [rect_record(0, 100, 100, 300, 250)]}
        gt_dir, pred_dir = write_dataset(tmp_path, gt, {})
        bad = ObbRecord(99, rect_record(0, 100, 100, 300, 250).vertices, confidence=0.5)
        (pred_dir / "a.txt").write_text(emit_obb_file([bad]))
        with pytest.raises(DocwarpError):
            evaluate_dataset(gt_dir, pred_dir)

    def test_report_text_layout(self, tmp_path):
        gt = {"a": [rect_record(0, 100, 100, 300, 250)]}
        pred = {"a": [ObbRecord(0, gt["a"][0].vertices, confidence=1.0)]}
        report = evaluate_dataset(*write_dataset(tmp_path, gt, pred))
        text = report.to_text()
        lines = text.splitlines()
        assert lines[0].split() == ["Class", "Images", "Instances", "P", "R", "mAP@0.5", "mAP@0.75", "mAP@0.5:0.95"]
        assert lines[1].startswith("caption")
        assert lines[-1].startswith("all")
        payload = report.to_dict()
        assert payload["aggregate"]["map50"] == 1.0
