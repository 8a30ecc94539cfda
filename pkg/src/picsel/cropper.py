"""Saliency-aware standardization crops.

Images are downscaled so the 1024x768 window just fits, an importance map
is built from bottom-up saliency, face boxes, and a center prior, and the
window position maximizing (content inside) minus (content on a thin
border ring) is found exactly with integral images. The border penalty
discourages crops that slice through salient structure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .indicators import luminance

log = logging.getLogger(__name__)

DEFAULT_CROP = (1024, 768)  # (width, height)
DEFAULT_BORDER = 10
DEFAULT_WEIGHTS = (1.0, 2.0, 0.5)  # saliency, faces, center

_WORK_WIDTH = 64
_SALIENCY_SIGMA = 2.5
_MIN_SALIENCY_SIDE = 16

# Importance maps are quantized to 24-bit fixed point before summation so
# kernel responses are exact integers: ties break exactly and the naive
# double-sum oracle agrees bit for bit. 1024*768 px * 2^24 is far below
# the int64 ceiling.
_FIXED_ONE = 1 << 24


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"degenerate face box {self}")


@dataclass(frozen=True)
class CropResult:
    x: int
    y: int
    width: int
    height: int
    score: float


def _resize_float(plane: np.ndarray, size_wh: tuple[int, int]) -> np.ndarray:
    img = Image.fromarray(plane.astype(np.float32), mode="F")
    return np.asarray(img.resize(size_wh, Image.BILINEAR), dtype=np.float64)


def spectral_residual_saliency(image) -> np.ndarray:
    """Bottom-up saliency from the residual of the log-amplitude spectrum.

    The luminance plane is resized to a 64-px working width; the residual
    is the log-amplitude spectrum minus its 3x3 local mean, and the map is
    the Gaussian-smoothed squared magnitude of the inverse transform of
    exp(residual) recombined with the original phase, upscaled back and
    normalized by its maximum. A constant frame has no residual energy and
    returns an all-zeros map. Requires both sides >= 16 px.
    """
    arr = np.asarray(image, dtype=np.float64)
    gray = luminance(arr) if arr.ndim == 3 else arr
    h, w = gray.shape
    if min(h, w) < _MIN_SALIENCY_SIDE:
        raise ValueError(
            f"image too small for saliency: {w}x{h}, need both sides >= {_MIN_SALIENCY_SIDE}"
        )
    if float(np.ptp(gray)) == 0.0:
        return np.zeros_like(gray)

    work_h = max(1, round(h * _WORK_WIDTH / w))
    work = _resize_float(gray, (_WORK_WIDTH, work_h))

    spectrum = np.fft.fft2(work)
    log_amp = np.log(np.abs(spectrum) + 1e-12)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="nearest")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * np.angle(spectrum)))) ** 2
    sal = ndimage.gaussian_filter(sal, sigma=_SALIENCY_SIGMA, mode="nearest")

    sal = _resize_float(sal, (w, h))
    sal = np.maximum(sal, 0.0)
    peak = float(sal.max())
    return sal / peak if peak > 0.0 else sal


def combine_importance(
    saliency: np.ndarray,
    face_boxes=(),
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> np.ndarray:
    """Weighted sum of saliency, rasterized face boxes, and a center prior.

    Each component is normalized to [0, 1] before weighting and the sum is
    renormalized by its maximum. Face boxes paint 1.0 over their area;
    boxes sticking out of the frame are clipped with a warning. The center
    prior is an isotropic Gaussian whose sigma is a quarter of the image
    diagonal.
    """
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.ndim != 2:
        raise ValueError(f"saliency must be 2-D, got shape {sal.shape}")
    w_sal, w_face, w_center = weights
    if min(weights) < 0 or max(weights) <= 0:
        raise ValueError(f"weights must be non-negative and not all zero: {weights}")
    h, w = sal.shape

    peak = float(sal.max())
    sal_n = sal / peak if peak > 0.0 else sal

    faces = np.zeros((h, w), dtype=np.float64)
    for box in face_boxes:
        x0, y0 = max(box.x, 0), max(box.y, 0)
        x1, y1 = min(box.x + box.width, w), min(box.y + box.height, h)
        if x0 != box.x or y0 != box.y or x1 != box.x + box.width or y1 != box.y + box.height:
            log.warning("face box %s clipped to %dx%d frame", box, w, h)
        if x1 > x0 and y1 > y0:
            faces[y0:y1, x0:x1] = 1.0

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    sigma = math.hypot(w, h) / 4.0
    center = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    center /= center.max()

    total = w_sal * sal_n + w_face * faces + w_center * center
    peak = float(total.max())
    return total / peak if peak > 0.0 else total


def _window_sums(ii: np.ndarray, hh: int, ww: int, y_off: int, x_off: int, ny: int, nx: int):
    # Sum of every hh x ww window whose top-left corner is (y + y_off, x + x_off)
    # for y in [0, ny), x in [0, nx), from an inclusive-exclusive integral image.
    y0 = y_off
    x0 = x_off
    return (
        ii[y0 + hh : y0 + hh + ny, x0 + ww : x0 + ww + nx]
        - ii[y0 : y0 + ny, x0 + ww : x0 + ww + nx]
        - ii[y0 + hh : y0 + hh + ny, x0 : x0 + nx]
        + ii[y0 : y0 + ny, x0 : x0 + nx]
    )


def quantize_importance(importance: np.ndarray) -> np.ndarray:
    """The documented fixed-point grid the kernel scan actually sums."""
    return np.rint(np.asarray(importance, dtype=np.float64) * _FIXED_ONE).astype(np.int64)


def best_crop(
    importance: np.ndarray,
    crop_size: tuple[int, int] = DEFAULT_CROP,
    border: int = DEFAULT_BORDER,
) -> CropResult:
    """Place the crop window where interior importance minus border-ring
    importance is maximal.

    The kernel is +1 over the window except a border-px ring at -1. All
    responses are computed exactly (fixed-point integral images); ties
    prefer the window whose center is closest to the image center, then
    the smallest (y, x). The score is the winning response on the [0, 1]
    scale.
    """
    cw, ch = crop_size
    q = quantize_importance(importance)
    h, w = q.shape
    if cw <= 0 or ch <= 0:
        raise ValueError(f"bad crop size {crop_size}")
    if border < 0 or 2 * border >= min(cw, ch):
        raise ValueError(f"border {border} leaves no interior in a {cw}x{ch} crop")
    if h < ch or w < cw:
        raise ValueError(f"importance map {w}x{h} smaller than crop {cw}x{ch}")

    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    ii[1:, 1:] = q.cumsum(axis=0).cumsum(axis=1)

    ny, nx = h - ch + 1, w - cw + 1
    full = _window_sums(ii, ch, cw, 0, 0, ny, nx)
    interior = _window_sums(ii, ch - 2 * border, cw - 2 * border, border, border, ny, nx)
    response = 2 * interior - full

    best = response.max()
    ys, xs = np.nonzero(response == best)
    # Squared distance of crop center to image center, times 4 to stay integral.
    d2 = (2 * ys + ch - h) ** 2 + (2 * xs + cw - w) ** 2
    pick = np.lexsort((xs, ys, d2))[0]
    return CropResult(
        x=int(xs[pick]),
        y=int(ys[pick]),
        width=cw,
        height=ch,
        score=float(best) / _FIXED_ONE,
    )


def resize_for_crop(
    image: np.ndarray,
    crop_size: tuple[int, int] = DEFAULT_CROP,
    allow_upscale: bool = False,
) -> np.ndarray:
    """Bilinear resize so the crop window just fits inside the image.

    The scale is max(crop_w/w, crop_h/h): the tighter axis lands exactly on
    the crop size and the other keeps slack. Scales above 1 mean upscaling
    and are rejected unless allow_upscale is set.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {arr.shape}")
    h, w = arr.shape[:2]
    cw, ch = crop_size
    scale = max(cw / w, ch / h)
    if scale > 1.0 and not allow_upscale:
        raise ValueError(
            f"{w}x{h} image needs x{scale:.3f} upscaling to cover {cw}x{ch}"
        )
    nw = max(cw, round(w * scale))
    nh = max(ch, round(h * scale))
    if (nw, nh) == (w, h):
        return arr.copy()
    img = Image.fromarray(arr.astype(np.uint8) if arr.dtype != np.uint8 else arr)
    return np.asarray(img.resize((nw, nh), Image.BILINEAR))


def apply_crop(image: np.ndarray, crop: CropResult) -> np.ndarray:
    return np.asarray(image)[crop.y : crop.y + crop.height, crop.x : crop.x + crop.width]


def scale_face_boxes(boxes, scale: float) -> tuple[FaceBox, ...]:
    """Map face boxes detected on the original frame onto a rescaled one."""
    out = []
    for b in boxes:
        out.append(
            FaceBox(
                x=round(b.x * scale),
                y=round(b.y * scale),
                width=max(1, round(b.width * scale)),
                height=max(1, round(b.height * scale)),
            )
        )
    return tuple(out)
