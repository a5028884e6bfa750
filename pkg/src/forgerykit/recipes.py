"""Offline negative-sample recipes and the online augmentation chain.

Each recipe is a pure function of ``(image, params, rng[, landmarks])``:
the rng is a :class:`~forgerykit.rng.DeterministicRng` and every call builds
a fresh generator from it, so re-running a recipe reproduces it byte for byte.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import imaging as im
from .errors import (DegenerateBoxError, ParameterError, RecipeInapplicable)
from .landmarks import DEFAULT_PAD, REGIONS, LandmarkSet, region_bbox
from .rng import DeterministicRng


@dataclass(frozen=True)
class CutoutParams:
    per_region_prob: float = 0.5
    pad: int = DEFAULT_PAD
    # test hook: with False an all-miss draw is returned unchanged
    force_minimum: bool = True

    def __post_init__(self):
        if not 0.0 <= self.per_region_prob <= 1.0:
            raise ParameterError("per_region_prob must lie in [0, 1]")
        if self.pad < 0:
            raise ParameterError("pad must be >= 0")


@dataclass(frozen=True)
class CropParams:
    crop_size: int = 150
    out_size: int = 512

    def __post_init__(self):
        if self.crop_size <= 0 or self.out_size <= 0:
            raise ParameterError("crop_size and out_size must be positive")


@dataclass(frozen=True)
class OverlayParams:
    num_shifts: int = 4
    max_shift: int = 20

    def __post_init__(self):
        if self.num_shifts < 1 or self.max_shift < 1:
            raise ParameterError("num_shifts and max_shift must be >= 1")


@dataclass(frozen=True)
class CartoonParams:
    k_colors: int = 8
    block: int = 9
    c: float = 2.0
    median_kernel: int = 7
    max_iters: int = 20

    def __post_init__(self):
        if self.k_colors < 2:
            raise ParameterError("k_colors must be >= 2")


@dataclass(frozen=True)
class SketchParams:
    blur_sigma: float = 6.0
    blur_kernel: int = 21


@dataclass(frozen=True)
class BinarizeParams:
    center: int = 128
    jitter: int = 20

    def __post_init__(self):
        if self.jitter < 0:
            raise ParameterError("jitter must be >= 0")
        if not 0 <= self.center - self.jitter <= self.center + self.jitter <= 255:
            raise ParameterError("threshold range must stay inside [0, 255]")


@dataclass(frozen=True)
class RecipeParams:
    cutout: CutoutParams = field(default_factory=CutoutParams)
    crop: CropParams = field(default_factory=CropParams)
    overlay: OverlayParams = field(default_factory=OverlayParams)
    cartoon: CartoonParams = field(default_factory=CartoonParams)
    sketch: SketchParams = field(default_factory=SketchParams)
    binarize: BinarizeParams = field(default_factory=BinarizeParams)


def override_params(params, values: dict):
    """``dataclasses.replace`` that coerces strings to the field's type."""
    if not values:
        return params
    fields = {f.name: f for f in dataclasses.fields(params)}
    clean = {}
    for key, raw in values.items():
        if key not in fields:
            raise ParameterError(f"{type(params).__name__} has no parameter {key!r}")
        current = getattr(params, key)
        if isinstance(raw, str):
            if isinstance(current, bool):
                if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ParameterError(f"{key}: expected a boolean, got {raw!r}")
                raw = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                raw = int(raw)
            elif isinstance(current, float):
                raw = float(raw)
        clean[key] = raw
    return dataclasses.replace(params, **clean)


@dataclass
class GeneratedSample:
    image: np.ndarray
    recipe: str
    source_id: str
    seed: int
    params_used: dict
    label: str = "fake"


def _sample(img, recipe, params, rng: DeterministicRng, source_id, **extra):
    used = dataclasses.asdict(params)
    used.update(extra)
    return GeneratedSample(img, recipe, source_id, rng.seed, used)


def cutout_facial_regions(img, lms: LandmarkSet, params: CutoutParams = CutoutParams(),
                          rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    """Fill randomly chosen facial-region boxes with random solid colours.

    Each region is selected independently with ``per_region_prob``; draws
    with no region selected are redrawn so the sample always differs from
    its source.
    """
    img = im.validate_image(img)
    h, w = img.shape[:2]
    boxes = {}
    for name, region in REGIONS.items():
        try:
            boxes[name] = region_bbox(lms, region, params.pad, w, h)
        except DegenerateBoxError:
            continue
    if not boxes:
        raise RecipeInapplicable(f"{source_id or 'image'}: every facial region box is degenerate")
    if params.force_minimum and params.per_region_prob == 0:
        raise ParameterError("per_region_prob=0 cannot satisfy the forced minimum")
    gen = rng.generator()
    names = list(boxes)
    while True:
        picked = gen.random(len(names)) < params.per_region_prob
        if picked.any() or not params.force_minimum:
            break
    out = img.copy()
    selected, colors = [], []
    for name, hit in zip(names, picked):
        if not hit:
            continue
        r = boxes[name]
        color = gen.integers(0, 256, size=im.channels(img))
        out[r.y:r.y2, r.x:r.x2] = color if img.ndim == 3 else color[0]
        selected.append(name)
        colors.append([int(v) for v in color])
    return _sample(out, "cutout", params, rng, source_id,
                   candidates=names, selected=selected, colors=colors,
                   boxes={n: list(boxes[n]) for n in selected})


def local_crop_enlarge(img, params: CropParams = CropParams(),
                       rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    img = im.validate_image(img)
    h, w = img.shape[:2]
    size = params.crop_size
    if w < size or h < size:
        raise RecipeInapplicable(f"{source_id or 'image'}: {w}x{h} is smaller than crop {size}")
    gen = rng.generator()
    x = int(gen.integers(0, w - size + 1))
    y = int(gen.integers(0, h - size + 1))
    patch = im.crop(img, im.Rect(x, y, size, size))
    out = im.resize_bilinear(patch, params.out_size, params.out_size)
    return _sample(out, "crop", params, rng, source_id, rect=[x, y, size, size])


def draw_shifts(gen: np.random.Generator, num_shifts: int, max_shift: int) -> list:
    shifts = []
    while len(shifts) < num_shifts:
        dx, dy = (int(v) for v in gen.integers(-max_shift, max_shift + 1, size=2))
        if (dx, dy) != (0, 0):
            shifts.append((dx, dy))
    return shifts


def overlay_shifts(gray: np.ndarray, shifts) -> np.ndarray:
    """Rounded mean of zero-filled shifted copies."""
    acc = np.zeros(gray.shape, dtype=np.int64)
    for dx, dy in shifts:
        acc += im.translate(gray, dx, dy)
    n = len(shifts)
    return ((2 * acc + n) // (2 * n)).astype(np.uint8)


def gray_translate_overlay(img, params: OverlayParams = OverlayParams(),
                           rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    gray = im.to_grayscale(img)
    shifts = draw_shifts(rng.generator(), params.num_shifts, params.max_shift)
    out = overlay_shifts(gray, shifts)
    return _sample(out, "overlay", params, rng, source_id, shifts=[list(s) for s in shifts])


def cartoon_layers(img, params: CartoonParams, gen):
    """Return ``(edges, quantized, smoothed)`` for an RGB image."""
    edges = im.adaptive_threshold(im.to_grayscale(img), params.block, params.c)
    quant, palette = im.kmeans_quantize(img, params.k_colors, params.max_iters, gen)
    smooth = np.stack([im.median_filter(np.ascontiguousarray(quant[..., ch]),
                                        params.median_kernel) for ch in range(3)], axis=2)
    return edges, quant, smooth, palette


def cartoonize(img, params: CartoonParams = CartoonParams(),
               rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    img = im.validate_image(img)
    if img.ndim != 3:
        raise RecipeInapplicable(f"{source_id or 'image'}: cartoonize needs an RGB image")
    edges, _, smooth, palette = cartoon_layers(img, params, rng.generator())
    out = np.where(edges[..., None] == 255, smooth, 0).astype(np.uint8)
    return _sample(out, "cartoon", params, rng, source_id, palette=[list(p) for p in palette])


def color_dodge(gray: np.ndarray, blurred_inverse: np.ndarray) -> np.ndarray:
    d = np.maximum(255 - blurred_inverse.astype(np.int64), 1)
    g = gray.astype(np.int64)
    return np.minimum((2 * 255 * g + d) // (2 * d), 255).astype(np.uint8)


def sketch(img, params: SketchParams = SketchParams(),
           rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    gray = im.to_grayscale(img)
    blur = im.gaussian_blur(255 - gray, params.blur_sigma, params.blur_kernel)
    return _sample(color_dodge(gray, blur), "sketch", params, rng, source_id)


def binarize_random(img, params: BinarizeParams = BinarizeParams(),
                    rng: DeterministicRng = DeterministicRng(0), source_id: str = ""):
    gen = rng.generator()
    t = int(gen.integers(params.center - params.jitter, params.center + params.jitter + 1))
    out = np.where(im.to_grayscale(img) > t, 255, 0).astype(np.uint8)
    return _sample(out, "binarize", params, rng, source_id, threshold=t)


class Recipe(NamedTuple):
    fn: Callable
    params_field: str
    needs_landmarks: bool = False


RECIPES = {
    "cutout": Recipe(cutout_facial_regions, "cutout", needs_landmarks=True),
    "crop": Recipe(local_crop_enlarge, "crop"),
    "overlay": Recipe(gray_translate_overlay, "overlay"),
    "cartoon": Recipe(cartoonize, "cartoon"),
    "sketch": Recipe(sketch, "sketch"),
    "binarize": Recipe(binarize_random, "binarize"),
}


def apply_recipe(name: str, img, params, rng: DeterministicRng,
                 landmarks: LandmarkSet | None = None, source_id: str = ""):
    try:
        recipe = RECIPES[name]
    except KeyError:
        raise ParameterError(f"unknown recipe {name!r}") from None
    if recipe.needs_landmarks:
        if landmarks is None:
            raise RecipeInapplicable(f"{source_id or 'image'}: no landmarks for {name}")
        return recipe.fn(img, landmarks, params, rng, source_id)
    return recipe.fn(img, params, rng, source_id)


# --- online augmentation --------------------------------------------------

@dataclass(frozen=True)
class AugmentPolicy:
    out_size: int = 256
    flip_prob: float = 0.5
    invert_prob: float = 0.2
    contrast_range: tuple = (0.6, 1.4)
    rotate_range: tuple = (-30.0, 30.0)


POLICY_OPS = ("invert", "contrast", "rotate")


class AugmentOps(NamedTuple):
    flip: bool
    op: str
    value: float  # invert: 1.0 if applied; contrast factor; rotation degrees


def plan_augment(gen: np.random.Generator, policy: AugmentPolicy = AugmentPolicy()) -> AugmentOps:
    flip = bool(gen.random() < policy.flip_prob)
    op = POLICY_OPS[int(gen.integers(len(POLICY_OPS)))]
    if op == "invert":
        value = 1.0 if gen.random() < policy.invert_prob else 0.0
    elif op == "contrast":
        value = float(gen.uniform(*policy.contrast_range))
    else:
        value = float(gen.uniform(*policy.rotate_range))
    return AugmentOps(flip, op, value)


def apply_augment(img, ops: AugmentOps, policy: AugmentPolicy = AugmentPolicy()) -> np.ndarray:
    out = im.resize_bilinear(img, policy.out_size, policy.out_size)
    if ops.flip:
        out = im.hflip(out)
    if ops.op == "invert":
        return im.invert(out) if ops.value else out
    if ops.op == "contrast":
        return im.adjust_contrast(out, ops.value)
    return im.rotate(out, ops.value)


def online_augment(img, rng, policy: AugmentPolicy = AugmentPolicy()) -> np.ndarray:
    """Resize, random flip, then one randomly chosen policy op."""
    gen = rng.generator() if isinstance(rng, DeterministicRng) else rng
    return apply_augment(img, plan_augment(gen, policy), policy)
