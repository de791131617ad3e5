"""docwarp: scene-document augmentation, OBB ground truth and rotated-IoU
evaluation for document layout datasets."""

from .affine import AffineParams, build_affine, invert_affine
from .annotation import (
    LABELS,
    AnnotatedDocument,
    Dropped,
    LayoutLabel,
    Shape,
    clip_shape,
    parse_labelme,
    transform_shapes,
    write_labelme,
)
from .deformation import (
    DeformationSpec,
    DisplacementField,
    chain_forward,
    chain_inverse,
    forward_map,
    inverse_map,
    make_field,
    perlin2,
)
from .evaluation import EvalReport, average_precision, evaluate_dataset, match_detections, rotated_iou
from .obb import ObbRecord, canonical_order, emit_obb_file, parse_obb_file, polygon_to_obb
from .pipeline import (
    AugmentationConfig,
    BatchReport,
    ManifestEntry,
    augment_document,
    load_config,
    load_config_file,
    run_batch,
    sample_plan,
)
from .plan import TransformPlan
from .raster import FillStyle, WarpResult, read_image, render_overlay, warp_image, write_image
from .screening import ScreeningReport, ScreeningThresholds, is_self_intersecting, screen_document

__version__ = "0.1.0"
