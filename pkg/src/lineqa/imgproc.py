"""Core grayscale image operations.

Images are plain 2-D ``numpy.uint8`` arrays (row-major, intensities 0-255);
``shape == (height, width)``. All operations are pure functions: they never
modify their input and are safe to call from multiple threads.

Conventions, fixed once and relied on by the tests:

* Blur uses a truncated Gaussian kernel of odd length, renormalized to sum 1,
  applied separably with edge replication at the borders.
* Resampling places pixel centers at ``(i + 0.5) / n`` (half-pixel alignment).
* Rotation is about the image center ``((w-1)/2, (h-1)/2)``; positive angles
  turn the content counter-clockwise (row 0 at the top).
* Intermediate arithmetic is float64; quantization (round, clamp to [0, 255])
  happens once, at the output boundary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ParameterError

MODEL_INPUT_WIDTH = 400
MODEL_INPUT_HEIGHT = 40


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check that ``img`` is a non-empty 2-D uint8 array and return it."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ParameterError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.size == 0:
        raise ParameterError("image is empty")
    if img.dtype != np.uint8:
        raise ParameterError(f"expected uint8 intensities, got dtype {img.dtype}")
    return img


def quantize(arr: np.ndarray) -> np.ndarray:
    """Round a real-valued intensity grid to the nearest int and clamp to [0, 255]."""
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class BlurSpec:
    """Gaussian blur parameters: standard deviation and odd kernel length."""

    sigma: float
    kernel_size: int = 11

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")


@dataclass(frozen=True)
class GridSpec:
    """Segment counts along x and y for grid dividing."""

    nx: int = 4
    ny: int = 6

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ParameterError(f"grid must have nx, ny >= 1, got {self.nx}x{self.ny}")


def gaussian_kernel_1d(sigma: float, kernel_size: int) -> np.ndarray:
    """Truncated 1-D Gaussian of odd length, renormalized to sum exactly 1."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError(f"kernel_size must be a positive odd integer, got {kernel_size}")
    radius = kernel_size // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_replicate(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    return sliding_window_view(padded, len(kernel), axis=axis) @ kernel


def blur_float(arr: np.ndarray, sigma: float, kernel_size: int = 11) -> np.ndarray:
    """Separable Gaussian blur of a float64 grid, without quantization."""
    kernel = gaussian_kernel_1d(sigma, kernel_size)
    out = _convolve_replicate(np.asarray(arr, dtype=np.float64), kernel, axis=1)
    return _convolve_replicate(out, kernel, axis=0)


def gaussian_blur(img: np.ndarray, spec: BlurSpec) -> np.ndarray:
    """Blur an image with a normalized truncated Gaussian, separably."""
    img = validate_image(img)
    return quantize(blur_float(img.astype(np.float64), spec.sigma, spec.kernel_size))


def _bilinear_sample(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``arr`` at real coordinates, clamping neighbors to the border."""
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = arr[y0, x0] * (1.0 - fx) + arr[y0, x1] * fx
    bottom = arr[y1, x0] * (1.0 - fx) + arr[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def rotate(img: np.ndarray, angle_deg: float, fill: float | None = None) -> np.ndarray:
    """Rotate about the image center with bilinear interpolation.

    Output has the source dimensions; destination pixels whose source sample
    falls outside the image take the ``fill`` intensity (default: the source
    median, a good stand-in for a near-solid background).
    """
    img = validate_image(img)
    if abs(angle_deg) > 45:
        raise ParameterError(f"|angle_deg| must be <= 45, got {angle_deg}")
    if fill is None:
        fill = float(np.median(img))

    h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    # Inverse map of a counter-clockwise content rotation (y axis points down).
    src_x = cx + cos_t * dx - sin_t * dy
    src_y = cy + sin_t * dx + cos_t * dy

    arr = img.astype(np.float64)
    out = _bilinear_sample(arr, src_x, src_y)
    inside = (src_x >= 0) & (src_x <= w - 1) & (src_y >= 0) & (src_y <= h - 1)
    out = np.where(inside, out, fill)
    return quantize(out)


def divide(img: np.ndarray, grid: GridSpec) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Split an image into an nx-by-ny grid of segments.

    Segment (i, j) spans columns [floor(i*w/nx), floor((i+1)*w/nx)) and rows
    [floor(j*h/ny), floor((j+1)*h/ny)); segments tile the image exactly.
    Returns (segment, (x_offset, y_offset)) pairs in row-major reading order.
    """
    img = validate_image(img)
    h, w = img.shape
    if grid.nx > w or grid.ny > h:
        raise ParameterError(f"grid {grid.nx}x{grid.ny} larger than image {w}x{h}")
    xb = [(i * w) // grid.nx for i in range(grid.nx + 1)]
    yb = [(j * h) // grid.ny for j in range(grid.ny + 1)]
    out = []
    for j in range(grid.ny):
        for i in range(grid.nx):
            seg = img[yb[j]:yb[j + 1], xb[i]:xb[i + 1]].copy()
            out.append((seg, (xb[i], yb[j])))
    return out


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resample with half-pixel sample alignment."""
    img = validate_image(img)
    if new_w < 1 or new_h < 1:
        raise ParameterError(f"target size must be >= 1, got {new_w}x{new_h}")
    h, w = img.shape
    if (new_w, new_h) == (w, h):
        return img.copy()
    xs = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    return quantize(_bilinear_sample(img.astype(np.float64), grid_x, grid_y))


def normalize_for_model(crop: np.ndarray) -> np.ndarray:
    """Map a crop to the predictor's fixed 40x400 real-valued input.

    The crop is scaled (aspect preserved) to height 40, then right-padded with
    its median intensity or center-cropped to width 400, and finally mapped to
    [0, 1] by dividing by 255. Returns a float64 array of shape (40, 400).
    """
    crop = validate_image(crop)
    h, w = crop.shape
    if (h, w) != (MODEL_INPUT_HEIGHT, MODEL_INPUT_WIDTH):
        new_w = max(1, round(w * MODEL_INPUT_HEIGHT / h))
        scaled = resize_bilinear(crop, new_w, MODEL_INPUT_HEIGHT)
        if new_w < MODEL_INPUT_WIDTH:
            pad_value = float(np.median(scaled))
            out = np.full((MODEL_INPUT_HEIGHT, MODEL_INPUT_WIDTH), pad_value, dtype=np.float64)
            out[:, :new_w] = scaled
        elif new_w > MODEL_INPUT_WIDTH:
            x0 = (new_w - MODEL_INPUT_WIDTH) // 2
            out = scaled[:, x0:x0 + MODEL_INPUT_WIDTH].astype(np.float64)
        else:
            out = scaled.astype(np.float64)
    else:
        out = crop.astype(np.float64)
    return out / 255.0


def laplacian_variance(img: np.ndarray) -> float:
    """Variance of the 4-neighbor Laplacian; a standard sharpness statistic."""
    arr = validate_image(img).astype(np.float64)
    lap = (
        -4.0 * arr[1:-1, 1:-1]
        + arr[:-2, 1:-1]
        + arr[2:, 1:-1]
        + arr[1:-1, :-2]
        + arr[1:-1, 2:]
    )
    return float(lap.var())


# ---------------------------------------------------------------------------
# PGM (P5) I/O


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Write a binary PGM (P5, maxval 255)."""
    img = validate_image(img)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255); round-trips write_pgm bit-exactly."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (missing P5 magic)")
    # Header tokens may be separated by whitespace and '#' comments.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        m = re.compile(rb"(?:\s+|#[^\n]*\n)*(\d+)").match(raw, pos)
        if m is None:
            raise DataError(f"{path}: malformed PGM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = tokens
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte after maxval
    data = raw[pos:pos + w * h]
    if len(data) != w * h:
        raise DataError(f"{path}: truncated pixel data ({len(data)} of {w * h} bytes)")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()
