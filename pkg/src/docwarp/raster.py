"""Image buffers and warping.

Images are uint8 numpy arrays of shape (height, width, channels) with
channels 3 (RGB) or 4 (RGBA), row-major. Output canvases keep the input
dimensions; content pushed outside the frame is lost (annotation clipping
handles the bookkeeping).

``warp_image`` resamples through a TransformPlan with backward mapping:
for every output pixel q the source is ``inv_deformation(inv_affine(q))``,
sampled bilinearly with a configurable out-of-frame fill. The deformation
inverse is solved by fixed-point iteration on a coarse lattice in affine
preimage space and interpolated to full resolution; lattice spacing is
chosen from the fields' curvature bounds so the interpolation stays below
~0.01 px and the per-pixel error is dominated by the fixed-point tolerance.
The heavy per-pixel resampling runs through cv2.remap (output dims here are
3-6 Mpx; a pure-python gather is an order of magnitude slower).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from . import deformation, geometry
from .affine import invert_affine
from .errors import ImageIoError, UnsupportedFormat
from .plan import TransformPlan

DEFAULT_FILL_COLOR = (114, 114, 114)

# fraction of non-converged inverse pixels above which screening flags the doc
NONCONVERGED_FLAG_FRACTION = 0.005

# error budget (px) per interpolation stage of the pixel path; combined
# with the fixed-point tolerance the sampling error stays ~0.2 px, which
# bilinear resampling cannot resolve. The exact annotation path never goes
# through these tables.
_LATTICE_ERR_BUDGET = 0.1


@dataclass(frozen=True)
class FillStyle:
    """Out-of-frame sample policy: a constant color or edge replication."""

    mode: str = "constant"
    color: tuple[int, int, int] = DEFAULT_FILL_COLOR

    def __post_init__(self) -> None:
        if self.mode not in ("constant", "replicate"):
            raise ValueError(f"fill mode must be 'constant' or 'replicate', got {self.mode!r}")
        if self.mode == "constant" and any(not (0 <= c <= 255) for c in self.color):
            raise ValueError(f"fill color components must be in [0, 255], got {self.color}")


@dataclass
class WarpResult:
    image: np.ndarray
    nonconverged_fraction: float


def read_image(path) -> np.ndarray:
    """Load a PNG or JPEG as (H, W, 3|4) uint8."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA"):
                im = im.convert("RGBA" if "A" in im.mode or im.mode == "P" else "RGB")
            return np.asarray(im)
    except FileNotFoundError as exc:
        raise ImageIoError(f"cannot read image {path}: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"not a supported image file: {path}") from exc
    except OSError as exc:
        raise ImageIoError(f"cannot read image {path}: {exc}") from exc


def write_image(path, img: np.ndarray, jpeg_quality: int = 90) -> None:
    """Write PNG (lossless) or JPEG (quality 90 by default) based on suffix."""
    suffix = Path(path).suffix.lower()
    pil = Image.fromarray(img)
    try:
        if suffix == ".png":
            pil.save(path, format="PNG")
        elif suffix in (".jpg", ".jpeg"):
            if pil.mode == "RGBA":
                pil = pil.convert("RGB")
            pil.save(path, format="JPEG", quality=jpeg_quality)
        else:
            raise UnsupportedFormat(f"unsupported output format {suffix!r} for {path}")
    except OSError as exc:
        raise ImageIoError(f"cannot write image {path}: {exc}") from exc


def _affine_preimage_maps(a_inv: np.ndarray, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Affine preimage coordinates of the output pixel grid, float32 (H, W)."""
    xs = np.arange(w, dtype=np.float32)
    ys = np.arange(h, dtype=np.float32)
    a = a_inv.astype(np.float32)
    px = a[0, 0] * xs[None, :] + (a[0, 1] * ys + a[0, 2])[:, None]
    py = a[1, 0] * xs[None, :] + (a[1, 1] * ys + a[1, 2])[:, None]
    return px, py


def _effective_fields(fields, x0, y0, x1, y1, step):
    """Tabulate fields whose exact evaluation is expensive (gradient noise)."""
    out = []
    for f in fields:
        if f.displace_grid is not None and not f.is_identity:
            margin = f.max_displacement + 2 * step
            out.append(deformation.tabulated(f, x0 - margin, y0 - margin, x1 + margin, y1 + margin, step))
        else:
            out.append(f)
    return out


def _step_for(curvature: float, budget: float) -> float:
    # the 4 px floor bounds lattice size for very curvy fields; with default
    # amplitude caps that costs at most ~0.1 px extra path error
    if curvature <= 0:
        return 32.0
    return float(np.clip(math.sqrt(8.0 * budget / curvature), 4.0, 32.0))


def warp_image(
    img: np.ndarray,
    plan: TransformPlan,
    fill: FillStyle = FillStyle(),
    inverse_iters: int = 12,
    inverse_tol: float = 0.05,
) -> WarpResult:
    """Warp pixels through a plan with backward mapping and bilinear sampling.

    Output dims equal input dims. A neutral plan reproduces the input
    byte-for-byte. Raises SingularMatrix for a non-invertible affine stage.
    Every pixel is computed independently, so the result is deterministic
    regardless of internal threading.
    """
    h, w = img.shape[:2]
    if (w, h) != (plan.frame_w, plan.frame_h):
        raise ValueError(f"plan frame {plan.frame_w}x{plan.frame_h} != image {w}x{h}")
    a_inv = invert_affine(plan.affine_matrix)
    px, py = _affine_preimage_maps(a_inv, w, h)

    fraction = 0.0
    if plan.has_deformation:
        corners = geometry.apply_matrix(a_inv, np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float))
        fields = [f for f in plan.fields if not f.is_identity]
        total_disp = sum(f.max_displacement for f in fields)
        total_curv = sum(f.curvature for f in fields)
        step = _step_for(total_curv, _LATTICE_ERR_BUDGET)
        margin = total_disp + 2 * step
        x0, y0 = corners.min(axis=0) - margin
        x1, y1 = corners.max(axis=0) + margin
        eff = _effective_fields(fields, x0, y0, x1, y1, step)

        nx = int(math.ceil((x1 - x0) / step)) + 2
        ny = int(math.ceil((y1 - y0) / step)) + 2
        gx = x0 + step * np.arange(nx)
        gy = y0 + step * np.arange(ny)
        gxx, gyy = np.meshgrid(gx, gy)
        nodes = np.column_stack((gxx.ravel(), gyy.ravel()))
        inv = deformation.chain_inverse(eff, nodes, iters=inverse_iters, tol=inverse_tol)
        inv_dx = (inv.points[:, 0] - nodes[:, 0]).reshape(ny, nx).astype(np.float32)
        inv_dy = (inv.points[:, 1] - nodes[:, 1]).reshape(ny, nx).astype(np.float32)

        tix = (px - np.float32(x0)) / np.float32(step)
        tiy = (py - np.float32(y0)) / np.float32(step)
        sx = px + cv2.remap(inv_dx, tix, tiy, cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
        sy = py + cv2.remap(inv_dy, tix, tiy, cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)

        if not np.all(inv.converged):
            ok = inv.converged.reshape(ny, nx).astype(np.float32)
            ok_px = cv2.remap(ok, tix, tiy, cv2.INTER_NEAREST, borderMode=cv2.BORDER_REPLICATE)
            fraction = float(1.0 - ok_px.mean())
    else:
        sx, sy = px, py

    if fill.mode == "constant":
        border_mode = cv2.BORDER_CONSTANT
        border_value = tuple(fill.color) + ((255,) if img.shape[2] == 4 else ())
    else:
        border_mode = cv2.BORDER_REPLICATE
        border_value = None
    out = cv2.remap(img, sx, sy, cv2.INTER_LINEAR, borderMode=border_mode, borderValue=border_value)
    return WarpResult(out, fraction)


# overlay colors for the 14 layout labels plus a fallback
_PALETTE_CYCLE = (
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 180, 30),
    (0, 128, 128),
    (220, 120, 180),
    (130, 90, 20),
    (100, 100, 255),
    (128, 0, 0),
    (0, 160, 90),
)


def default_palette(labels) -> dict:
    return {lbl: _PALETTE_CYCLE[i % len(_PALETTE_CYCLE)] for i, lbl in enumerate(labels)}


def render_overlay(img: np.ndarray, shapes, palette: dict | None = None) -> np.ndarray:
    """Draw 2 px polygon outlines plus label tags on a copy of the image.

    ``shapes`` is an iterable of (label, polygon) pairs with polygons in
    pixel coordinates of ``img``. Shapes partially out of frame are simply
    drawn clipped by PIL. The input buffer is never touched.
    """
    shapes = list(shapes)
    if palette is None:
        palette = default_palette(sorted({lbl for lbl, _ in shapes}))
    pil = Image.fromarray(img.copy())
    draw = ImageDraw.Draw(pil)
    for label, poly in shapes:
        p = np.asarray(poly, dtype=float)
        color = tuple(palette.get(label, (255, 0, 0)))
        xy = [(float(x), float(y)) for x, y in p]
        draw.polygon(xy, outline=color, width=2)
        tx, ty = xy[int(np.argmin(p[:, 1]))]
        text_w = max(6 * len(label), 6)
        draw.rectangle([tx, ty - 11, tx + text_w, ty], fill=color)
        draw.text((tx + 1, ty - 11), label, fill=(255, 255, 255))
    return np.asarray(pil)
