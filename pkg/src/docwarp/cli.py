"""Command-line entry point: augment, convert, validate, evaluate, preview,
review.

Exit codes: 0 clean, 1 fatal (bad config, unusable arguments), 2 partial
(some files failed; the report lists them). Log level comes from the
DOCWARP_LOG environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from . import annotation, evaluation, obb, pipeline, raster, screening
from .errors import DocwarpError

log = logging.getLogger("docwarp")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; our exit-code contract reserves 2
    # for partial failures, so usage problems become exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="docwarp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="batch-augment stem-matched (image, LabelMe) pairs")
    p.add_argument("--config", required=True, help="augmentation config JSON")
    p.add_argument("--in", dest="input_dir", required=True)
    p.add_argument("--out", dest="output_dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("convert", help="convert annotations between labelme and obb")
    p.add_argument("--in", dest="input_dir", required=True)
    p.add_argument("--out", dest="output_dir", required=True)
    p.add_argument("--to", choices=("obb", "labelme"), required=True)

    p = sub.add_parser("validate", help="re-run screening over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--export-accepted", default=None, metavar="DIR",
                   help="copy accepted variants into DIR as a curated dataset")

    p = sub.add_parser("evaluate", help="rotated-IoU mAP of predictions vs ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("preview", help="write annotation overlay PNGs")
    p.add_argument("--in", dest="input_dir", required=True)
    p.add_argument("--out", dest="output_dir", required=True)

    p = sub.add_parser("review", help="serve the human curation UI")
    p.add_argument("--manifest", required=True)
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--host", default="127.0.0.1")
    return parser


def cmd_augment(args) -> int:
    config = pipeline.load_config_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    report = pipeline.run_batch(config, args.input_dir, args.output_dir, workers=max(1, args.workers))
    print(report.to_text())
    return 2 if report.errors else 0


def cmd_convert(args) -> int:
    in_dir = Path(args.input_dir)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed: list[str] = []
    converted = 0
    if args.to == "obb":
        dims = {}
        for path in sorted(in_dir.glob("*.json")):
            if path.name == "dims.json":
                continue
            try:
                doc = annotation.parse_labelme(path.read_text())
                records = [
                    obb.polygon_to_obb(s.polygon, doc.image_w, doc.image_h, s.label)
                    for s in doc.shapes
                ]
                (out_dir / (path.stem + ".txt")).write_text(obb.emit_obb_file(records))
                dims[path.stem] = [doc.image_w, doc.image_h]
                converted += 1
            except (DocwarpError, OSError) as exc:
                failed.append(f"{path.name}: {exc}")
        (out_dir / "dims.json").write_text(json.dumps(dims, sort_keys=True))
    else:
        dims_path = in_dir / "dims.json"
        if not dims_path.exists():
            print("convert --to labelme needs a dims.json sidecar in the input dir", file=sys.stderr)
            return 1
        dims = json.loads(dims_path.read_text())
        for path in sorted(in_dir.glob("*.txt")):
            try:
                if path.stem not in dims:
                    raise DocwarpError("no dims.json entry")
                w, h = dims[path.stem]
                records = obb.parse_obb_file(path.read_text(), is_prediction=False)
                shapes = [
                    annotation.Shape(
                        label=annotation.LayoutLabel.from_index(r.class_index),
                        polygon=obb.obb_to_polygon(r, w, h),
                    )
                    for r in records
                ]
                doc = annotation.AnnotatedDocument(
                    image_path=path.stem + ".png", image_w=int(w), image_h=int(h), shapes=shapes
                )
                (out_dir / (path.stem + ".json")).write_text(annotation.write_labelme(doc))
                converted += 1
            except (DocwarpError, OSError, IndexError) as exc:
                failed.append(f"{path.name}: {exc}")
    print(f"converted {converted} file(s), {len(failed)} failed")
    for f in failed:
        print(f"  failed: {f}")
    return 2 if failed else 0


def _reconstruct_outcomes(before: annotation.AnnotatedDocument, after_shapes, dropped):
    """Rebuild the position-aligned outcome list from manifest tombstones."""
    dropped_by_index = {d["index"]: d for d in dropped}
    outcomes: list = []
    it = iter(after_shapes)
    for i, orig in enumerate(before.shapes):
        if i in dropped_by_index:
            outcomes.append(annotation.Dropped(orig.label, dropped_by_index[i]["reason"]))
        else:
            outcomes.append(next(it))
    return outcomes


def cmd_validate(args) -> int:
    manifest_path = Path(args.manifest)
    entries = pipeline.load_manifest(manifest_path)
    root = manifest_path.parent
    flagged = 0
    flag_counts: dict[str, int] = {}
    for entry in entries:
        before = annotation.parse_labelme(Path(entry.source_annotation).read_text())
        after = annotation.parse_labelme((root / entry.annotation_path).read_text())
        outcomes = _reconstruct_outcomes(before, after.shapes, entry.dropped)
        report = screening.screen_document(before, outcomes, entry.nonconverged_fraction)
        if report.flagged:
            flagged += 1
        if report.visible_shape_fraction_low:
            flag_counts["visible_shape_fraction_low"] = flag_counts.get("visible_shape_fraction_low", 0) + 1
        if report.nonconverged_pixels_high:
            flag_counts["nonconverged_pixels_high"] = flag_counts.get("nonconverged_pixels_high", 0) + 1
        for f in report.shape_flags:
            for name in ("self_intersecting", "sub_min_area", "aspect_blowup", "out_of_frame_excess"):
                if getattr(f, name):
                    flag_counts[name] = flag_counts.get(name, 0) + 1
    print(f"entries   {len(entries)}")
    print(f"flagged   {flagged}")
    print(f"clean     {len(entries) - flagged}")
    for name in sorted(flag_counts):
        print(f"  {name}  {flag_counts[name]}")
    if args.export_accepted:
        n = _export_accepted(entries, root, Path(args.export_accepted))
        print(f"exported  {n} accepted variant(s) to {args.export_accepted}")
    return 0


def _export_accepted(entries, root: Path, out_dir: Path) -> int:
    count = 0
    for sub in ("images", "labels_labelme", "labels_obb"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    for e in entries:
        if e.verdict != "accepted":
            continue
        for rel in (e.image_path, e.annotation_path, e.obb_path):
            src = root / rel
            if src.exists():
                shutil.copy2(src, out_dir / rel)
        count += 1
    return count


def cmd_evaluate(args) -> int:
    report = evaluation.evaluate_dataset(args.gt, args.pred)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.to_text())
    return 0


def cmd_preview(args) -> int:
    in_dir = Path(args.input_dir)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    failed = []
    for stem, img_path, ann_path in pipeline.discover_pairs(in_dir):
        try:
            img = raster.read_image(img_path)
            doc = annotation.parse_labelme(ann_path.read_text())
            overlay = raster.render_overlay(img, [(s.label.value, s.polygon) for s in doc.shapes])
            raster.write_image(out_dir / (stem + ".png"), overlay)
            count += 1
        except (DocwarpError, OSError) as exc:
            failed.append(f"{stem}: {exc}")
    print(f"wrote {count} overlay(s), {len(failed)} failed")
    for f in failed:
        print(f"  failed: {f}")
    return 2 if failed else 0


def cmd_review(args) -> int:
    from .review_server import serve

    serve(args.manifest, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "augment": cmd_augment,
    "convert": cmd_convert,
    "validate": cmd_validate,
    "evaluate": cmd_evaluate,
    "preview": cmd_preview,
    "review": cmd_review,
}


def main(argv=None) -> int:
    level = os.environ.get("DOCWARP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DocwarpError as exc:
        print(f"docwarp {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"docwarp {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
