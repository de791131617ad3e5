from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from docwarp.annotation import AnnotatedDocument, LayoutLabel, Shape  # noqa: E402

REPO_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG_PATH = REPO_ROOT / "configs" / "default.json"


@pytest.fixture(scope="session")
def default_config_dict() -> dict:
    return json.loads(DEFAULT_CONFIG_PATH.read_text())


def make_page(width: int, height: int, rects, seed: int = 0) -> tuple[np.ndarray, AnnotatedDocument]:
    """Synthetic white page with filled dark rectangles as the only ink.

    Ink pixels are those whose center lies inside the rectangle, matching
    the toolkit's sampling convention, so the annotation polygon and the
    ink mask coincide exactly.
    """
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    shapes = []
    labels = list(LayoutLabel)
    for i, (x0, y0, x1, y1) in enumerate(rects):
        xs, ys = np.meshgrid(np.arange(width), np.arange(height))
        mask = (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
        img[mask] = 0
        poly = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
        shapes.append(Shape(label=labels[i % len(labels)], polygon=poly))
    doc = AnnotatedDocument(image_path="page.png", image_w=width, image_h=height, shapes=shapes)
    return img, doc


def labelme_json(width: int, height: int, shapes, image_path: str = "page.png", **extra) -> str:
    payload = dict(extra)
    payload.update(
        {
            "imagePath": image_path,
            "imageWidth": width,
            "imageHeight": height,
            "shapes": shapes,
        }
    )
    return json.dumps(payload)


def random_convex_polygon(rng, n_vertices: int, center=(0.0, 0.0), scale: float = 100.0) -> np.ndarray:
    """Random convex polygon: chain edge vectors (summing to zero) sorted by
    angle; the sorted chaining guarantees convexity."""
    edges = rng.uniform(-scale, scale, size=(n_vertices, 2))
    edges -= edges.mean(axis=0)
    order = np.argsort(np.arctan2(edges[:, 1], edges[:, 0]))
    verts = np.cumsum(edges[order], axis=0)
    verts -= verts.mean(axis=0)
    return verts + np.asarray(center, dtype=float)
