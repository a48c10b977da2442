"""Stage 1: text line detection.

Any callable ``GrayImage -> list[DetectedLine]`` can serve as a detector;
deep detectors plug in behind that interface. The built-in baseline is a
classical pipeline: binarize (global Otsu or adaptive mean), smear short
horizontal gaps so characters merge into line-shaped blobs, take connected
components, and keep the boxes that look like text lines.

``detect_with_dividing`` runs a detector per grid segment and translates the
boxes back; lines broken at segment borders stay broken on purpose (their
pieces carry the same quality as the whole). ``detect_resized`` reproduces
the detect-on-a-downscaled-page variant for comparison experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from . import imgproc
from .errors import ParameterError
from .imgproc import GridSpec


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"box must have positive size, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class DetectedLine:
    box: BoundingBox
    crop: np.ndarray
    source_segment: int | None = None

    def __post_init__(self):
        if self.crop.shape != (self.box.h, self.box.w):
            raise ParameterError(
                f"crop shape {self.crop.shape} does not match box {self.box.w}x{self.box.h}")


@dataclass(frozen=True)
class DetectorParams:
    """Baseline detector knobs. Heights/widths are in pixels of the input."""

    binarization: str = "otsu"  # "otsu" or "adaptive-mean"
    adaptive_window: int = 31
    adaptive_offset: float = 10.0
    # Inter-word gaps in rendered lines measure up to ~34 px at the default
    # font sizes; the smear must bridge them so a line becomes one component.
    smear_gap_px: int = 40
    min_height_px: int = 8
    max_height_px: int = 120
    min_width_px: int = 16
    min_fill_ratio: float = 0.05

    def __post_init__(self):
        if self.binarization not in ("otsu", "adaptive-mean"):
            raise ParameterError(f"unknown binarization {self.binarization!r}")
        if min(self.smear_gap_px, self.min_height_px, self.max_height_px, self.min_width_px) < 1:
            raise ParameterError("pixel thresholds must be positive")
        if self.min_height_px >= self.max_height_px:
            raise ParameterError("min_height_px must be below max_height_px")
        if self.adaptive_window < 3 or self.adaptive_window % 2 == 0:
            raise ParameterError("adaptive_window must be odd and >= 3")


Detector = Callable[[np.ndarray], list[DetectedLine]]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def otsu_threshold(img: np.ndarray) -> float:
    """Otsu's between-class-variance-maximizing global threshold."""
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = 0.0
    return float(np.argmax(between))


def binarize(img: np.ndarray, params: DetectorParams = DetectorParams()) -> np.ndarray:
    """Boolean ink mask (True where the pixel is dark text)."""
    img = imgproc.validate_image(img)
    if params.binarization == "otsu":
        return img <= otsu_threshold(img)
    local_mean = ndimage.uniform_filter(img.astype(np.float64), size=params.adaptive_window,
                                        mode="nearest")
    return img < local_mean - params.adaptive_offset


def smear_horizontal(mask: np.ndarray, max_gap: int) -> np.ndarray:
    """Fill background runs of length <= max_gap between ink pixels in a row."""
    h, w = mask.shape
    cols = np.arange(w)
    last = np.where(mask, cols, -1)
    np.maximum.accumulate(last, axis=1, out=last)
    nxt = np.where(mask, cols, w)
    nxt = np.flip(np.minimum.accumulate(np.flip(nxt, axis=1), axis=1), axis=1)
    gap = (~mask) & (last >= 0) & (nxt < w) & ((nxt - last - 1) <= max_gap)
    return mask | gap


def detect(img: np.ndarray, params: DetectorParams = DetectorParams()) -> list[DetectedLine]:
    """Find text-line boxes with the baseline classical pipeline.

    Returns lines sorted top-to-bottom then left-to-right; an image with no
    qualifying components yields an empty list.
    """
    img = imgproc.validate_image(img)
    ink = binarize(img, params)
    smeared = smear_horizontal(ink, params.smear_gap_px)
    labels, n = ndimage.label(smeared, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []

    out = []
    for sl in ndimage.find_objects(labels):
        y0, y1 = sl[0].start, sl[0].stop
        x0, x1 = sl[1].start, sl[1].stop
        w, h = x1 - x0, y1 - y0
        if not (params.min_height_px <= h <= params.max_height_px):
            continue
        if w < params.min_width_px:
            continue
        if ink[y0:y1, x0:x1].mean() < params.min_fill_ratio:
            continue
        box = BoundingBox(x0, y0, w, h)
        out.append(DetectedLine(box=box, crop=img[y0:y1, x0:x1].copy()))
    out.sort(key=lambda d: (d.box.y, d.box.x, d.box.w, d.box.h))
    return out


def _as_detector(params_or_detector: DetectorParams | Detector) -> Detector:
    if isinstance(params_or_detector, DetectorParams):
        params = params_or_detector
        return lambda img: detect(img, params)
    return params_or_detector


def detect_with_dividing(
    img: np.ndarray,
    grid: GridSpec,
    params: DetectorParams | Detector = DetectorParams(),
) -> list[DetectedLine]:
    """Detect per grid segment and translate boxes into page coordinates.

    Boxes broken at segment borders are kept as-is, not merged. Works with
    the baseline params or with any pluggable detector callable.
    """
    run = _as_detector(params)
    out = []
    for index, (segment, (ox, oy)) in enumerate(imgproc.divide(img, grid)):
        for line in run(segment):
            box = BoundingBox(line.box.x + ox, line.box.y + oy, line.box.w, line.box.h)
            out.append(DetectedLine(box=box, crop=line.crop, source_segment=index))
    out.sort(key=lambda d: (d.box.y, d.box.x, d.box.w, d.box.h))
    return out


def detect_resized(
    img: np.ndarray,
    target: tuple[int, int],
    params: DetectorParams | Detector = DetectorParams(),
) -> list[DetectedLine]:
    """Detect on a resized copy and scale boxes back to the original image.

    Exists to reproduce the downscale-the-whole-page strategy; small text
    that undersampling destroys is simply not found.
    """
    img = imgproc.validate_image(img)
    tw, th = target
    if tw < 1 or th < 1:
        raise ParameterError(f"target size must be positive, got {target}")
    h, w = img.shape
    if (tw, th) == (w, h):
        return _as_detector(params)(img)
    small = imgproc.resize_bilinear(img, tw, th)
    sx, sy = w / tw, h / th
    out = []
    for line in _as_detector(params)(small):
        x0 = min(w - 1, max(0, round(line.box.x * sx)))
        y0 = min(h - 1, max(0, round(line.box.y * sy)))
        x1 = min(w, max(x0 + 1, round((line.box.x + line.box.w) * sx)))
        y1 = min(h, max(y0 + 1, round((line.box.y + line.box.h) * sy)))
        box = BoundingBox(x0, y0, x1 - x0, y1 - y0)
        out.append(DetectedLine(box=box, crop=img[y0:y1, x0:x1].copy()))
    out.sort(key=lambda d: (d.box.y, d.box.x, d.box.w, d.box.h))
    return out


def overlay_boxes(img: np.ndarray, boxes: Sequence[BoundingBox], intensity: int = 0) -> np.ndarray:
    """Copy of the image with 2-px box borders drawn; for debugging output."""
    out = imgproc.validate_image(img).copy()
    for b in boxes:
        x1, y1 = b.x + b.w - 1, b.y + b.h - 1
        out[b.y:b.y + 2, b.x:x1 + 1] = intensity
        out[max(0, y1 - 1):y1 + 1, b.x:x1 + 1] = intensity
        out[b.y:y1 + 1, b.x:b.x + 2] = intensity
        out[b.y:y1 + 1, max(0, x1 - 1):x1 + 1] = intensity
    return out
