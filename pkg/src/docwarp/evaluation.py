"""Oriented-detection evaluation: rotated IoU, confidence-ordered greedy
matching, 101-point interpolated AP and per-class reports.

Metric conventions (kept in lockstep with the test oracles):

- IoU is computed in absolute pixel space. Normalized-space IoU distorts
  under non-square aspect ratios, so the evaluator denormalizes with each
  image's true dimensions, read from a stem-matched image file next to the
  ground truth or from a ``dims.json`` sidecar mapping stem -> [w, h].
- AP uses 101-point interpolation: the precision envelope sampled at
  recalls 0.00, 0.01, ..., 1.00, averaged. mAP@0.5:0.95 averages AP over
  the 10 thresholds 0.50..0.95 step 0.05.
- Matching is greedy per image: detections in descending confidence (ties
  by input order), each matching the highest-IoU unmatched same-class
  ground truth with IoU >= threshold.
- The single-scalar P/R per class is taken at the confidence maximizing F1
  with IoU-0.5 matching.
- Aggregates are unweighted macro means over classes present in the ground
  truth; classes with zero instances are skipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .annotation import LABELS, LayoutLabel
from .errors import DocwarpError, OutOfRange, ParseError
from .obb import ObbRecord, obb_to_polygon, parse_obb_file

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def rotated_iou(a: ObbRecord, b: ObbRecord, frame_w: float, frame_h: float) -> float:
    """Intersection over union of two OBBs in pixel space; 0 for degenerate boxes."""
    pa = obb_to_polygon(a, frame_w, frame_h)
    pb = obb_to_polygon(b, frame_w, frame_h)
    area_a = geometry.polygon_area(pa)
    area_b = geometry.polygon_area(pb)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    inter = geometry.convex_intersect(pa, pb)
    if inter.shape[0] < 3:
        return 0.0
    ai = geometry.polygon_area(inter)
    return ai / (area_a + area_b - ai)


def match_detections(
    gts: list[ObbRecord],
    dets: list[ObbRecord],
    iou_threshold: float,
    frame_w: float,
    frame_h: float,
    class_aware: bool = True,
) -> list[tuple[int, int | None]]:
    """Greedy single-image matching.

    Returns one (det_index, matched_gt_index or None) pair per detection in
    descending-confidence order (ties keep input order). Each ground truth
    matches at most once.
    """
    order = sorted(range(len(dets)), key=lambda i: (-(dets[i].confidence or 0.0), i))
    taken = [False] * len(gts)
    result = []
    for di in order:
        det = dets[di]
        best_iou = 0.0
        best_gi = None
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            if class_aware and gt.class_index != det.class_index:
                continue
            iou = rotated_iou(det, gt, frame_w, frame_h)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_gi = gi
        if best_gi is not None:
            taken[best_gi] = True
        result.append((di, best_gi))
    return result


def average_precision(tp_flags, n_gt: int) -> float | None:
    """101-point interpolated AP from confidence-ordered TP flags.

    Returns None when the class has no ground truth (skipped from macro
    means). The arithmetic is plain sequential float math so an independent
    enumeration oracle can reproduce it bit for bit.
    """
    if n_gt == 0:
        return None
    recalls = []
    precisions = []
    tp = 0
    fp = 0
    for flag in tp_flags:
        if flag:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    # precision envelope: max precision among points with recall >= r
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for i in range(101):
        r = i / 100
        idx = int(np.searchsorted(np.asarray(recalls), r, side="left"))
        total += envelope[idx] if idx < len(envelope) else 0.0
    return total / 101


@dataclass
class ClassReport:
    label: LayoutLabel
    images: int
    instances: int
    precision: float
    recall: float
    ap_by_threshold: dict[float, float]

    @property
    def ap50(self) -> float:
        return self.ap_by_threshold[0.5]

    @property
    def ap75(self) -> float:
        return self.ap_by_threshold[0.75]

    @property
    def map_coco(self) -> float:
        return sum(self.ap_by_threshold.values()) / len(self.ap_by_threshold)


@dataclass
class EvalReport:
    classes: list[ClassReport] = field(default_factory=list)

    def _macro(self, getter) -> float:
        vals = [getter(c) for c in self.classes if c.instances > 0]
        return sum(vals) / len(vals) if vals else 0.0

    @property
    def precision(self) -> float:
        return self._macro(lambda c: c.precision)

    @property
    def recall(self) -> float:
        return self._macro(lambda c: c.recall)

    @property
    def map50(self) -> float:
        return self._macro(lambda c: c.ap50)

    @property
    def map75(self) -> float:
        return self._macro(lambda c: c.ap75)

    @property
    def map_coco(self) -> float:
        return self._macro(lambda c: c.map_coco)

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "class": c.label.value,
                    "images": c.images,
                    "instances": c.instances,
                    "precision": c.precision,
                    "recall": c.recall,
                    "ap_by_threshold": {f"{t:.2f}": v for t, v in c.ap_by_threshold.items()},
                    "map50": c.ap50,
                    "map75": c.ap75,
                    "map50_95": c.map_coco,
                }
                for c in self.classes
            ],
            "aggregate": {
                "precision": self.precision,
                "recall": self.recall,
                "map50": self.map50,
                "map75": self.map75,
                "map50_95": self.map_coco,
            },
        }

    def to_text(self) -> str:
        header = f"{'Class':<18}{'Images':>8}{'Instances':>11}{'P':>8}{'R':>8}{'mAP@0.5':>10}{'mAP@0.75':>10}{'mAP@0.5:0.95':>14}"
        lines = [header]
        for c in self.classes:
            lines.append(
                f"{c.label.value:<18}{c.images:>8}{c.instances:>11}"
                f"{c.precision:>8.3f}{c.recall:>8.3f}{c.ap50:>10.4f}{c.ap75:>10.4f}{c.map_coco:>14.4f}"
            )
        lines.append(
            f"{'all':<18}{'':>8}{'':>11}"
            f"{self.precision:>8.3f}{self.recall:>8.3f}{self.map50:>10.4f}{self.map75:>10.4f}{self.map_coco:>14.4f}"
        )
        return "\n".join(lines)


def _parse_with_context(path: Path, is_prediction: bool) -> list[ObbRecord]:
    try:
        return parse_obb_file(path.read_text(), is_prediction=is_prediction)
    except (ParseError, OutOfRange) as exc:
        raise type(exc)(exc.line_no, f"{path.name}: {exc.message}") from None


def _image_dims(gt_dir: Path, stem: str, dims_table: dict | None) -> tuple[float, float]:
    for suffix in _IMAGE_SUFFIXES:
        p = gt_dir / (stem + suffix)
        if p.exists():
            from PIL import Image

            with Image.open(p) as im:
                return float(im.size[0]), float(im.size[1])
    if dims_table and stem in dims_table:
        w, h = dims_table[stem]
        return float(w), float(h)
    raise DocwarpError(
        f"no image or dims.json entry for stem {stem!r}; rotated IoU needs pixel dimensions"
    )


def evaluate_dataset(gt_dir, pred_dir, labels=LABELS) -> EvalReport:
    """Evaluate stem-matched OBB files in pred_dir against gt_dir.

    A missing prediction file means zero detections for that image. File
    order never affects the metrics (stems are sorted; ties in confidence
    resolve by sorted stem then line order).
    """
    gt_dir = Path(gt_dir)
    pred_dir = Path(pred_dir)
    dims_table = None
    dims_path = gt_dir / "dims.json"
    if dims_path.exists():
        dims_table = json.loads(dims_path.read_text())

    stems = sorted(p.stem for p in gt_dir.glob("*.txt"))
    images = {}
    n_classes = len(labels)
    for stem in stems:
        gts = _parse_with_context(gt_dir / (stem + ".txt"), is_prediction=False)
        pred_path = pred_dir / (stem + ".txt")
        dets = _parse_with_context(pred_path, is_prediction=True) if pred_path.exists() else []
        for r in gts + dets:
            if r.class_index >= n_classes:
                raise DocwarpError(
                    f"{stem}.txt: class index {r.class_index} outside label set of {n_classes}"
                )
        w, h = _image_dims(gt_dir, stem, dims_table)
        images[stem] = (gts, dets, w, h)

    classes = []
    for ci, label in enumerate(labels):
        n_images = sum(1 for gts, _, _, _ in images.values() if any(g.class_index == ci for g in gts))
        n_gt = sum(sum(1 for g in gts if g.class_index == ci) for gts, _, _, _ in images.values())
        ap_by_threshold = {}
        flags_at_50: list[tuple[float, bool]] = []
        for t in IOU_THRESHOLDS:
            scored: list[tuple[float, int, int, bool]] = []
            for img_idx, stem in enumerate(stems):
                gts, dets, w, h = images[stem]
                c_gts = [g for g in gts if g.class_index == ci]
                c_dets = [d for d in dets if d.class_index == ci]
                for pos, (di, gi) in enumerate(match_detections(c_gts, c_dets, t, w, h)):
                    scored.append((-(c_dets[di].confidence or 0.0), img_idx, pos, gi is not None))
            scored.sort(key=lambda s: (s[0], s[1], s[2]))
            tp_flags = [s[3] for s in scored]
            ap = average_precision(tp_flags, n_gt)
            ap_by_threshold[t] = 0.0 if ap is None else ap
            if t == 0.5:
                flags_at_50 = [(-s[0], s[3]) for s in scored]
        precision, recall = _operating_point(flags_at_50, n_gt)
        classes.append(
            ClassReport(
                label=label,
                images=n_images,
                instances=n_gt,
                precision=precision,
                recall=recall,
                ap_by_threshold=ap_by_threshold,
            )
        )
    return EvalReport(classes=classes)


def _operating_point(conf_flags: list[tuple[float, bool]], n_gt: int) -> tuple[float, float]:
    """P and R at the confidence cutoff maximizing F1 (IoU-0.5 matching)."""
    if n_gt == 0 or not conf_flags:
        return 0.0, 0.0
    best = (0.0, 0.0, 0.0)  # f1, p, r
    tp = 0
    fp = 0
    for _, flag in conf_flags:
        if flag:
            tp += 1
        else:
            fp += 1
        p = tp / (tp + fp)
        r = tp / n_gt
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if f1 > best[0]:
            best = (f1, p, r)
    return best[1], best[2]
