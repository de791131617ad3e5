"""JSON-configured, seed-deterministic batch augmentation.

Every output variant is derived from (master seed, source stem, variant
index) through a stable 64-bit hash, so adding or removing sources never
perturbs other variants and reruns are byte-identical regardless of the
worker count. The batch manifest records the full sampled parameter set
per variant; re-executing a variant from its manifest echo reproduces the
outputs exactly.

Output layout under the batch directory:

    images/            {stem}_aug{k:03d}.png
    labels_labelme/    {stem}_aug{k:03d}.json
    labels_obb/        {stem}_aug{k:03d}.txt  (+ dims.json sidecar)
    manifest.jsonl     one JSON object per variant
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import annotation, obb, raster, screening
from .affine import AffineParams
from .annotation import AnnotatedDocument, Dropped, Shape
from .deformation import INT_PARAMS, KINDS, PARAM_NAMES, DeformationSpec, make_field
from .errors import ConfigError, DocwarpError
from .plan import TransformPlan
from .raster import FillStyle
from .screening import ScreeningReport, ScreeningThresholds

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# sampled fields must stay clearly inside the fixed-point contraction regime
_MAX_FIELD_LIPSCHITZ = 0.9

# affine parameters drawn from ranges, in this fixed order
_AFFINE_RANGE_FIELDS = (
    "scale_x",
    "scale_y",
    "shear_x_deg",
    "shear_y_deg",
    "rotation_deg",
    "perspective_x",
    "perspective_y",
    "translate_x",
    "translate_y",
)
_AFFINE_NEUTRAL = {
    "scale_x": 1.0,
    "scale_y": 1.0,
    "shear_x_deg": 0.0,
    "shear_y_deg": 0.0,
    "rotation_deg": 0.0,
    "perspective_x": 0.0,
    "perspective_y": 0.0,
    "translate_x": 0.0,
    "translate_y": 0.0,
}


@dataclass(frozen=True)
class DeformationRanges:
    kind: str
    probability: float
    params: dict  # name -> (lo, hi)


@dataclass(frozen=True)
class AffineRanges:
    flip_h_probability: float = 0.0
    flip_v_probability: float = 0.0
    ranges: dict = field(default_factory=dict)  # name -> (lo, hi)


@dataclass(frozen=True)
class AugmentationConfig:
    seed: int
    per_image: int
    deformations: tuple[DeformationRanges, ...]
    affine: AffineRanges
    fill: FillStyle = FillStyle()
    clip_min_visible: float = 0.3
    clip_per_label: dict = field(default_factory=dict)
    screening: ScreeningThresholds = ScreeningThresholds()
    inverse_iters: int = 12
    inverse_tol: float = 0.05

    def min_visible_for(self, label: annotation.LayoutLabel) -> float:
        return self.clip_per_label.get(label.value, self.clip_min_visible)


def _check_range(name: str, rng) -> tuple[float, float]:
    if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
        raise ConfigError(f"{name}: range must be [lo, hi], got {rng!r}")
    lo, hi = float(rng[0]), float(rng[1])
    if lo > hi:
        raise ConfigError(f"{name}: lo {lo} > hi {hi}")
    return lo, hi


def _check_probability(name: str, p) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"{name}: probability {p} outside [0, 1]")
    return p


def load_config(data: dict) -> AugmentationConfig:
    """Validate a parsed config dict; raises ConfigError on any violation."""
    try:
        seed = int(data["seed"])
        per_image = int(data["per_image"])
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    if per_image < 1:
        raise ConfigError(f"per_image must be >= 1, got {per_image}")

    deformations = []
    for i, entry in enumerate(data.get("deformations", [])):
        kind = entry.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"deformations[{i}]: unknown kind {kind!r}")
        prob = _check_probability(f"deformations[{i}].probability", entry.get("probability", 0.0))
        params = {}
        allowed = PARAM_NAMES[kind] - {"seed"}  # noise seeds are derived, not configured
        for name, rng in entry.get("params", {}).items():
            if name not in allowed:
                raise ConfigError(f"deformations[{i}]: unknown param {name!r} for kind {kind}")
            params[name] = _check_range(f"deformations[{i}].params.{name}", rng)
        deformations.append(DeformationRanges(kind=kind, probability=prob, params=params))

    aff = data.get("affine", {})
    ranges = {}
    for name in _AFFINE_RANGE_FIELDS:
        if name in aff:
            ranges[name] = _check_range(f"affine.{name}", aff[name])
    known_aff = set(_AFFINE_RANGE_FIELDS) | {"flip_h_probability", "flip_v_probability"}
    unknown = set(aff) - known_aff
    if unknown:
        raise ConfigError(f"affine: unknown keys {sorted(unknown)}")
    affine = AffineRanges(
        flip_h_probability=_check_probability("affine.flip_h_probability", aff.get("flip_h_probability", 0.0)),
        flip_v_probability=_check_probability("affine.flip_v_probability", aff.get("flip_v_probability", 0.0)),
        ranges=ranges,
    )

    fill_cfg = data.get("fill", {})
    try:
        fill = FillStyle(
            mode=fill_cfg.get("mode", "constant"),
            color=tuple(fill_cfg.get("color", raster.DEFAULT_FILL_COLOR)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    clip_cfg = data.get("clip", {})
    clip_min = float(clip_cfg.get("min_visible", 0.3))
    if not 0.0 < clip_min <= 1.0:
        raise ConfigError(f"clip.min_visible must be in (0, 1], got {clip_min}")
    per_label = {}
    for label, value in clip_cfg.get("per_label", {}).items():
        annotation.LayoutLabel.parse(label)
        per_label[label] = float(value)

    inverse_cfg = data.get("inverse", {})
    config = AugmentationConfig(
        seed=seed,
        per_image=per_image,
        deformations=tuple(deformations),
        affine=affine,
        fill=fill,
        clip_min_visible=clip_min,
        clip_per_label=per_label,
        screening=ScreeningThresholds.from_dict(data.get("screening", {})),
        inverse_iters=int(inverse_cfg.get("iters", 12)),
        inverse_tol=float(inverse_cfg.get("tol", 0.05)),
    )
    _check_contraction(config)
    return config


def _check_contraction(config: AugmentationConfig) -> None:
    """Reject ranges that could produce non-invertible fields.

    Fixed-point inversion needs the displacement gradient below 1; we cap
    the estimated Lipschitz constant at the range extremes (max amplitude,
    min wavelength/cell, max octaves) with some margin.
    """
    for d in config.deformations:
        if d.probability == 0.0:
            continue
        worst = {}
        for name, (lo, hi) in d.params.items():
            if name.startswith(("amplitude", "k", "strength", "octaves")):
                worst[name] = hi if abs(hi) >= abs(lo) else lo
            else:
                worst[name] = lo
        if "octaves" in worst:
            worst["octaves"] = int(worst["octaves"])
        if d.kind == "elastic":
            worst.setdefault("seed", 0)
        try:
            fld = make_field(DeformationSpec(d.kind, 1000, 1000, worst))
        except DocwarpError as exc:
            raise ConfigError(f"deformation {d.kind}: {exc}") from None
        if fld.lipschitz > _MAX_FIELD_LIPSCHITZ:
            raise ConfigError(
                f"deformation {d.kind}: worst-case displacement gradient "
                f"{fld.lipschitz:.2f} exceeds {_MAX_FIELD_LIPSCHITZ} (not reliably invertible); "
                "reduce amplitude or increase wavelength/cell"
            )


def load_config_file(path) -> AugmentationConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return load_config(data)


def derive_seed(master_seed: int, stem: str, variant_index: int) -> int:
    """Stable 64-bit seed for one (source, variant) pair."""
    key = f"{master_seed}\x1f{stem}\x1f{variant_index}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def sample_plan(
    config: AugmentationConfig,
    source_stem: str,
    variant_index: int,
    frame_w: int,
    frame_h: int,
) -> TransformPlan:
    """Sample one TransformPlan; fully determined by (config, stem, index)."""
    rng = np.random.default_rng(derive_seed(config.seed, source_stem, variant_index))
    specs = []
    for d in config.deformations:
        if not rng.random() < d.probability:
            continue
        params = {}
        for name, (lo, hi) in d.params.items():
            if name in INT_PARAMS:
                params[name] = int(rng.integers(int(lo), int(hi) + 1))
            else:
                params[name] = float(rng.uniform(lo, hi))
        if d.kind == "elastic":
            params["seed"] = int(rng.integers(0, 2**31 - 1))
        specs.append(DeformationSpec(d.kind, frame_w, frame_h, params))

    values = dict(_AFFINE_NEUTRAL)
    flip_h = bool(rng.random() < config.affine.flip_h_probability)
    flip_v = bool(rng.random() < config.affine.flip_v_probability)
    for name in _AFFINE_RANGE_FIELDS:
        if name in config.affine.ranges:
            lo, hi = config.affine.ranges[name]
            values[name] = float(rng.uniform(lo, hi))
    params = AffineParams(frame_w=frame_w, frame_h=frame_h, flip_h=flip_h, flip_v=flip_v, **values)
    return TransformPlan(
        frame_w=frame_w,
        frame_h=frame_h,
        deformations=specs,
        affine_params=params,
        derivation={"master_seed": config.seed, "stem": source_stem, "variant": variant_index},
    )


@dataclass
class AugmentResult:
    image: np.ndarray
    document: AnnotatedDocument
    outcomes: list  # Shape | Dropped, aligned with the source shapes
    report: ScreeningReport
    nonconverged_fraction: float


def augment_document(
    doc: AnnotatedDocument,
    img: np.ndarray,
    plan: TransformPlan,
    config: AugmentationConfig,
) -> AugmentResult:
    """Warp pixels and annotations through one plan; pure function of inputs."""
    h, w = img.shape[:2]
    if (w, h) != (doc.image_w, doc.image_h):
        raise DocwarpError(
            f"image {w}x{h} does not match annotation dims {doc.image_w}x{doc.image_h}"
        )
    transformed = annotation.transform_shapes(doc, plan)
    outcomes = [
        annotation.clip_shape(s, w, h, config.min_visible_for(s.label))
        for s in transformed.shapes
    ]
    warp = raster.warp_image(img, plan, config.fill, config.inverse_iters, config.inverse_tol)
    report = screening.screen_document(doc, outcomes, warp.nonconverged_fraction, config.screening)
    out_doc = AnnotatedDocument(
        image_path=doc.image_path,
        image_w=w,
        image_h=h,
        shapes=[o for o in outcomes if isinstance(o, Shape)],
    )
    return AugmentResult(
        image=warp.image,
        document=out_doc,
        outcomes=outcomes,
        report=report,
        nonconverged_fraction=warp.nonconverged_fraction,
    )


@dataclass
class ManifestEntry:
    index: int
    source_image: str
    source_annotation: str
    stem: str
    variant: int
    image_path: str
    annotation_path: str
    obb_path: str
    plan: dict
    screening: dict
    dropped: list
    nonconverged_fraction: float
    verdict: str = "pending"
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "source_image": self.source_image,
            "source_annotation": self.source_annotation,
            "stem": self.stem,
            "variant": self.variant,
            "image_path": self.image_path,
            "annotation_path": self.annotation_path,
            "obb_path": self.obb_path,
            "plan": self.plan,
            "screening": self.screening,
            "dropped": self.dropped,
            "nonconverged_fraction": self.nonconverged_fraction,
            "verdict": self.verdict,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def load_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(ManifestEntry.from_dict(json.loads(line)))
    return entries


def save_manifest(path, entries) -> None:
    """Write the manifest atomically (write temp + rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(json.dumps(e.to_dict()) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class BatchReport:
    sources: int = 0
    variants: int = 0
    dropped_shapes: int = 0
    flagged_variants: int = 0
    errors: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"sources            {self.sources}",
            f"variants           {self.variants}",
            f"dropped_shapes     {self.dropped_shapes}",
            f"flagged_variants   {self.flagged_variants}",
            f"errors             {len(self.errors)}",
        ]
        lines.extend(f"  error: {e}" for e in self.errors)
        return "\n".join(lines)


def discover_pairs(input_dir) -> list[tuple[str, Path, Path]]:
    """Stem-matched (image, LabelMe JSON) pairs, sorted by stem."""
    input_dir = Path(input_dir)
    pairs = []
    seen = set()
    for img_path in sorted(input_dir.iterdir()):
        if img_path.suffix.lower() not in _IMAGE_SUFFIXES or img_path.stem in seen:
            continue
        ann_path = img_path.with_suffix(".json")
        if ann_path.exists():
            pairs.append((img_path.stem, img_path, ann_path))
            seen.add(img_path.stem)
        else:
            log.warning("no annotation for %s, skipping", img_path.name)
    return pairs


def _process_source(config, stem, img_path, ann_path, out_dir):
    entries = []
    dropped_total = 0
    img = raster.read_image(img_path)
    doc = annotation.parse_labelme(Path(ann_path).read_text())
    h, w = img.shape[:2]
    for k in range(config.per_image):
        plan = sample_plan(config, stem, k, w, h)
        result = augment_document(doc, img, plan, config)
        name = f"{stem}_aug{k:03d}"
        image_rel = f"images/{name}.png"
        ann_rel = f"labels_labelme/{name}.json"
        obb_rel = f"labels_obb/{name}.txt"
        raster.write_image(out_dir / image_rel, result.image)
        out_doc = result.document
        out_doc.image_path = f"../images/{name}.png"
        (out_dir / ann_rel).write_text(annotation.write_labelme(out_doc))
        records = [
            obb.polygon_to_obb(s.polygon, w, h, s.label) for s in out_doc.shapes
        ]
        (out_dir / obb_rel).write_text(obb.emit_obb_file(records))
        dropped = [
            {"index": i, "label": o.label.value, "reason": o.reason}
            for i, o in enumerate(result.outcomes)
            if isinstance(o, Dropped)
        ]
        dropped_total += len(dropped)
        entries.append(
            ManifestEntry(
                index=-1,  # assigned at flush
                source_image=str(img_path),
                source_annotation=str(ann_path),
                stem=stem,
                variant=k,
                image_path=image_rel,
                annotation_path=ann_rel,
                obb_path=obb_rel,
                plan=plan.to_dict(),
                screening=result.report.to_dict(),
                dropped=dropped,
                nonconverged_fraction=result.nonconverged_fraction,
            )
        )
    return entries, dropped_total


def run_batch(config: AugmentationConfig, input_dir, output_dir, workers: int = 1) -> BatchReport:
    """Augment every stem-matched pair in input_dir into output_dir.

    Per-file errors are recorded in the report and the batch continues.
    Output content is fully determined by (config, inputs): sources are
    processed from a sorted list, per-variant RNG is derivation-based and
    the manifest is flushed sorted at the end.
    """
    out_dir = Path(output_dir)
    for sub in ("images", "labels_labelme", "labels_obb"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    pairs = discover_pairs(input_dir)
    report = BatchReport(sources=len(pairs))
    all_entries: list[ManifestEntry] = []
    dims: dict[str, list[int]] = {}

    def job(pair):
        stem, img_path, ann_path = pair
        return stem, _process_source(config, stem, img_path, ann_path, out_dir)

    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(pair[0], pool.submit(job, pair)) for pair in pairs]
            for stem, fut in futures:
                try:
                    results.append(fut.result())
                except (DocwarpError, OSError) as exc:
                    report.errors.append(f"{stem}: {exc}")
    else:
        for pair in pairs:
            try:
                results.append(job(pair))
            except (DocwarpError, OSError) as exc:
                report.errors.append(f"{pair[0]}: {exc}")

    for stem, (entries, dropped_total) in results:
        report.dropped_shapes += dropped_total
        all_entries.extend(entries)

    all_entries.sort(key=lambda e: (e.stem, e.variant))
    for i, e in enumerate(all_entries):
        e.index = i
        dims[f"{e.stem}_aug{e.variant:03d}"] = [e.plan["frame_w"], e.plan["frame_h"]]
        if e.screening["overall"] == "flagged":
            report.flagged_variants += 1
    report.variants = len(all_entries)
    (out_dir / "labels_obb" / "dims.json").write_text(json.dumps(dims, indent=0, sort_keys=True))
    save_manifest(out_dir / "manifest.jsonl", all_entries)
    return report
