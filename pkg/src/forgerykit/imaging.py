"""Pixel primitives shared by every recipe.

Images are plain ``numpy.uint8`` arrays, row-major, shaped ``(H, W)`` for
grayscale or ``(H, W, 3)`` for RGB. Filters replicate edge pixels; geometric
ops fill vacated pixels with 0. All rounding is half-up.
"""

from __future__ import annotations

import io
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InputError, ParameterError
from .rng import as_generator


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def inside(self, width: int, height: int) -> bool:
        return (self.x >= 0 and self.y >= 0 and self.w > 0 and self.h > 0
                and self.x2 <= width and self.y2 <= height)


def validate_image(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ParameterError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[2] != 3:
        raise ParameterError(f"expected 1 or 3 channels, got {arr.shape[2]}")
    if arr.ndim not in (2, 3):
        raise ParameterError(f"expected a 2-D or 3-D array, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ParameterError("image has zero width or height")
    return arr


def channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def _round_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _check_odd(name: str, k: int, minimum: int = 3) -> None:
    if int(k) != k or k < minimum or k % 2 == 0:
        raise ParameterError(f"{name} must be an odd integer >= {minimum}, got {k}")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, computed in integer arithmetic so it rounds exactly."""
    img = validate_image(img)
    if img.ndim == 2:
        return img
    rgb = img.astype(np.int32)
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return luma.astype(np.uint8)


def _sample_axis(n_in: int, n_out: int):
    # half-pixel centre alignment, clamped to the valid range
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    img = validate_image(img)
    if out_w <= 0 or out_h <= 0:
        raise ParameterError(f"output size must be positive, got {out_w}x{out_h}")
    h, w = img.shape[:2]
    if (w, h) == (out_w, out_h):
        return img.copy()
    src = img.astype(np.float64)
    y0, y1, fy = _sample_axis(h, out_h)
    x0, x1, fx = _sample_axis(w, out_w)
    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0]
    rows = top + (src[y1] - top) * fy
    left = rows[:, x0]
    out = left + (rows[:, x1] - left) * fx
    return _round_u8(out)


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    _check_odd("kernel", size)
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float, kernel: int) -> np.ndarray:
    img = validate_image(img)
    weights = gaussian_kernel(sigma, kernel)
    out = img.astype(np.float64)
    for axis in (0, 1):
        out = ndimage.correlate1d(out, weights, axis=axis, mode="nearest")
    return _round_u8(out)


def median_filter(img: np.ndarray, kernel: int) -> np.ndarray:
    img = validate_image(img)
    if img.ndim != 2:
        raise ParameterError("median_filter takes a single-channel image")
    _check_odd("kernel", kernel)
    return ndimage.median_filter(img, size=kernel, mode="nearest")


def box_sums(img: np.ndarray, block: int) -> np.ndarray:
    """Exact integer sum over each pixel's block x block neighbourhood."""
    r = block // 2
    padded = np.pad(img.astype(np.int64), r, mode="edge")
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    sat[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = img.shape
    return (sat[block:block + h, block:block + w] - sat[:h, block:block + w]
            - sat[block:block + h, :w] + sat[:h, :w])


def adaptive_threshold(img: np.ndarray, block: int, c: float) -> np.ndarray:
    """255 where a pixel exceeds its local block mean minus ``c``, else 0."""
    img = validate_image(img)
    if img.ndim != 2:
        raise ParameterError("adaptive_threshold takes a single-channel image")
    _check_odd("block", block)
    mean = box_sums(img, block) / float(block * block)
    return np.where(img > mean - c, 255, 0).astype(np.uint8)


class KMeansResult(NamedTuple):
    centers: np.ndarray  # (k', C) float64
    labels: np.ndarray  # per point
    errors: list  # weighted squared error after every Lloyd update
    iterations: int


def _nearest(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.zeros((len(points), len(centers)))
    for ch in range(points.shape[1]):
        diff = points[:, ch, None] - centers[None, :, ch]
        d2 += diff * diff
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(points)), labels]


def kmeans_pp_seed(points: np.ndarray, weights: np.ndarray, k: int,
                   gen: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over weighted points; stops early once every
    point coincides with a centre."""
    p = weights / weights.sum()
    centers = [points[gen.choice(len(points), p=p)]]
    while len(centers) < k:
        _, d2 = _nearest(points, np.asarray(centers))
        mass = weights * d2
        total = mass.sum()
        if total <= 0:
            break
        centers.append(points[gen.choice(len(points), p=mass / total)])
    return np.asarray(centers, dtype=np.float64)


def lloyd(points: np.ndarray, weights: np.ndarray, centers: np.ndarray,
          max_iters: int = 20) -> KMeansResult:
    centers = centers.copy()
    labels, _ = _nearest(points, centers)
    errors = []
    it = 0
    for it in range(1, max_iters + 1):
        k = len(centers)
        wsum = np.bincount(labels, weights=weights, minlength=k)
        filled = wsum > 0
        for ch in range(points.shape[1]):
            acc = np.bincount(labels, weights=weights * points[:, ch], minlength=k)
            centers[filled, ch] = acc[filled] / wsum[filled]
        new_labels, d2 = _nearest(points, centers)
        errors.append(float((weights * ((points - centers[labels]) ** 2).sum(axis=1)).sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    labels, _ = _nearest(points, centers)
    return KMeansResult(centers, labels, errors, it)


def kmeans_quantize(img: np.ndarray, k: int, max_iters: int = 20, rng=0):
    """Reduce an image to at most ``k`` colours.

    Runs weighted Lloyd iterations over the image's distinct colours, which
    is equivalent to clustering every pixel but far cheaper on photos.

    Returns:
        ``(quantized, palette)`` where palette lists the distinct output
        colours (ints for grayscale, RGB tuples otherwise).
    """
    img = validate_image(img)
    if k <= 0:
        raise ParameterError(f"k must be positive, got {k}")
    n_pixels = img.shape[0] * img.shape[1]
    if k > n_pixels:
        raise ParameterError(f"k={k} exceeds pixel count {n_pixels}")
    gen = as_generator(rng)
    c = channels(img)
    flat = img.reshape(-1, c)
    # pack pixels into scalar keys; 1-D unique is much faster than axis=0
    keys = flat[:, 0].astype(np.int32)
    for ch in range(1, c):
        keys = (keys << 8) | flat[:, ch]
    ukeys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    colors = np.stack([(ukeys >> (8 * (c - 1 - ch))) & 0xFF for ch in range(c)], axis=1)
    points = colors.astype(np.float64)
    weights = counts.astype(np.float64)
    seeds = kmeans_pp_seed(points, weights, k, gen)
    result = lloyd(points, weights, seeds, max_iters)
    rounded = _round_u8(result.centers)
    out = rounded[result.labels][inverse].reshape(img.shape)
    used = np.unique(rounded[np.unique(result.labels)], axis=0)
    if c == 1:
        palette = [int(v[0]) for v in used]
    else:
        palette = [tuple(int(x) for x in v) for v in used]
    return out, palette


def translate(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    img = validate_image(img)
    h, w = img.shape[:2]
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    out[dst_y, dst_x] = img[src_y, src_x]
    return out


def invert(img: np.ndarray) -> np.ndarray:
    return 255 - validate_image(img)


def hflip(img: np.ndarray) -> np.ndarray:
    return validate_image(img)[:, ::-1].copy()


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale deviations from the image's grayscale mean by ``factor``."""
    img = validate_image(img)
    if factor < 0:
        raise ParameterError(f"contrast factor must be >= 0, got {factor}")
    if factor == 1:
        return img.copy()
    mean = float(to_grayscale(img).mean())
    return _round_u8(mean + factor * (img.astype(np.float64) - mean))


def _bilinear_zero(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample at fractional coordinates; anything outside the raster is 0."""
    h, w = img.shape[:2]
    src = img.astype(np.float64)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        v = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(ok[..., None] if img.ndim == 3 else ok, v, 0.0)

    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bottom = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bottom * fy


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation about the image centre, zero fill."""
    img = validate_image(img)
    if degrees % 360 == 0:
        return img.copy()
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = math.radians(degrees)
    cos_t, sin_t = math.cos(t), math.sin(t)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    sx = cx + cos_t * dx - sin_t * dy
    sy = cy + sin_t * dx + cos_t * dy
    return _round_u8(_bilinear_zero(img, sx, sy))


def crop(img: np.ndarray, rect: Rect) -> np.ndarray:
    img = validate_image(img)
    h, w = img.shape[:2]
    if not rect.inside(w, h):
        raise ParameterError(f"{rect} does not fit a {w}x{h} image")
    return img[rect.y:rect.y2, rect.x:rect.x2].copy()


# --- file I/O -------------------------------------------------------------

def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise InputError(f"{path}: only 8-bit images are supported (mode {im.mode})")
            if im.mode == "L":
                return np.asarray(im, dtype=np.uint8).copy()
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except InputError:
        raise
    except (OSError, ValueError, SyntaxError) as exc:
        raise InputError(f"{path}: cannot decode image ({exc})") from exc


def encode_image(img: np.ndarray, fmt: str = "PNG") -> bytes:
    img = validate_image(img)
    buf = io.BytesIO()
    im = Image.fromarray(img, mode="L" if img.ndim == 2 else "RGB")
    if fmt.upper() == "PNG":
        im.save(buf, format="PNG", compress_level=1)
    elif fmt.upper() in ("JPEG", "JPG"):
        im.save(buf, format="JPEG", quality=95)
    else:
        raise ParameterError(f"unsupported format {fmt}")
    return buf.getvalue()


def write_image(path, img: np.ndarray) -> bytes:
    """Encode by extension and write; returns the bytes written."""
    path = Path(path)
    fmt = "JPEG" if path.suffix.lower() in (".jpg", ".jpeg") else "PNG"
    data = encode_image(img, fmt)
    path.write_bytes(data)
    return data
