"""Viola-Jones face detection on stump-based Haar cascades.

Reads the BOOST/HAAR cascade XML layout (``internalNodes``/``leafValues``)
and runs a multi-scale sliding-window search in which the features, not the
image, are scaled.  All window statistics are computed from exact integer
summed-area tables.

Evaluation convention for a window of area ``A`` at some scale::

    nf    = sqrt(A * sqsum - sum**2)       # == A * stddev, 1 * A if flat
    value = sum_i weight_i * rectsum_i     # rects scaled and rounded
    leaf  = left if value < node_threshold * nf else right

A stage rejects when the running sum of its leaves is below the stage
threshold.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import imaging as im
from .errors import (CascadeGeometryError, CascadeParseError, ParameterError,
                     UnsupportedCascadeError)
from .imaging import Rect

DEFAULT_SCALE_FACTOR = 1.1
DEFAULT_MIN_NEIGHBORS = 3
DEFAULT_MIN_SIZE = 30
GROUP_OVERLAP = 0.5


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple  # ((Rect, weight), ...)


@dataclass(frozen=True)
class WeakClassifier:
    feature: int
    threshold: float
    left: float
    right: float


@dataclass(frozen=True)
class Stage:
    threshold: float
    weak: tuple


@dataclass(frozen=True)
class CascadeModel:
    window_w: int
    window_h: int
    stages: tuple
    features: tuple

    @property
    def n_weak(self) -> int:
        return sum(len(s.weak) for s in self.stages)


class IntegralPair(NamedTuple):
    sat: np.ndarray  # (H+1, W+1) int64
    sqsat: np.ndarray


class Detection(NamedTuple):
    box: Rect
    neighbors: int


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


# --- parsing --------------------------------------------------------------

def _text(node, tag, where):
    child = node.find(tag)
    if child is None or child.text is None:
        raise CascadeParseError(f"missing <{tag}> in {where}")
    return child.text.strip()


def _floats(text, where):
    try:
        return [float(t) for t in text.split()]
    except ValueError:
        raise CascadeParseError(f"non-numeric value in {where}") from None


def parse_cascade(xml_bytes) -> CascadeModel:
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode()
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise CascadeParseError(f"malformed cascade XML: {exc}") from None
    node = root if root.find("stages") is not None else None
    if node is None:
        node = next((c for c in root if c.find("stages") is not None), None)
    if node is None:
        raise CascadeParseError("no cascade node with <stages> found")

    stage_type = _text(node, "stageType", "cascade")
    feature_type = _text(node, "featureType", "cascade")
    if stage_type != "BOOST":
        raise UnsupportedCascadeError(f"unsupported stageType {stage_type}")
    if feature_type != "HAAR":
        raise UnsupportedCascadeError(f"unsupported featureType {feature_type}")
    try:
        win_w = int(_text(node, "width", "cascade"))
        win_h = int(_text(node, "height", "cascade"))
    except ValueError:
        raise CascadeParseError("window size is not an integer") from None

    features = []
    feat_node = node.find("features")
    if feat_node is None:
        raise CascadeParseError("missing <features>")
    for fi, f in enumerate(feat_node.findall("_")):
        tilted = f.find("tilted")
        if tilted is not None and tilted.text and tilted.text.strip() not in ("0", ""):
            raise UnsupportedCascadeError(f"feature {fi}: tilted features are not supported")
        rects_node = f.find("rects")
        if rects_node is None:
            raise CascadeParseError(f"feature {fi}: missing <rects>")
        rects = []
        for r in rects_node.findall("_"):
            vals = _floats(r.text or "", f"feature {fi}")
            if len(vals) != 5:
                raise CascadeParseError(f"feature {fi}: rect needs 5 numbers, got {len(vals)}")
            x, y, w, h = (int(v) for v in vals[:4])
            rect = Rect(x, y, w, h)
            if not rect.inside(win_w, win_h):
                raise CascadeGeometryError(f"feature {fi}: {rect} leaves the {win_w}x{win_h} window")
            rects.append((rect, vals[4]))
        if not 2 <= len(rects) <= 3:
            raise CascadeParseError(f"feature {fi}: expected 2 or 3 rects, got {len(rects)}")
        features.append(HaarFeature(tuple(rects)))

    stages = []
    stages_node = node.find("stages")
    for si, s in enumerate(stages_node.findall("_")):
        where = f"stage {si}"
        threshold = _floats(_text(s, "stageThreshold", where), where)[0]
        weak_node = s.find("weakClassifiers")
        if weak_node is None:
            raise CascadeParseError(f"{where}: missing <weakClassifiers>")
        weak = []
        for wi, wc in enumerate(weak_node.findall("_")):
            w_where = f"{where} weak {wi}"
            nodes = _floats(_text(wc, "internalNodes", w_where), w_where)
            leaves = _floats(_text(wc, "leafValues", w_where), w_where)
            if len(nodes) != 4 or len(leaves) != 2:
                raise UnsupportedCascadeError(f"{w_where}: only single-split stumps are supported")
            feat = int(nodes[2])
            if not 0 <= feat < len(features):
                raise CascadeParseError(f"{w_where}: feature index {feat} out of range")
            weak.append(WeakClassifier(feat, nodes[3], leaves[0], leaves[1]))
        if not weak:
            raise CascadeParseError(f"{where}: no weak classifiers")
        stages.append(Stage(threshold, tuple(weak)))
    if not stages:
        raise CascadeParseError("cascade has no stages")
    return CascadeModel(win_w, win_h, tuple(stages), tuple(features))


def load_cascade(path=None) -> CascadeModel:
    """Parse a cascade file; ``None`` loads the bundled frontal-face model."""
    if path is None:
        data = resources.files(__package__).joinpath(
            "data/haarcascade_frontalface_default.xml").read_bytes()
    else:
        data = Path(path).read_bytes()
    return parse_cascade(data)


@lru_cache(maxsize=4)
def default_cascade() -> CascadeModel:
    return load_cascade()


# --- integral images ------------------------------------------------------

def integral_images(img) -> IntegralPair:
    img = im.validate_image(img)
    if img.ndim != 2:
        raise ParameterError("integral_images takes a single-channel image")
    h, w = img.shape
    v = img.astype(np.int64)
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sqsat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sat[1:, 1:] = v.cumsum(0).cumsum(1)
    sqsat[1:, 1:] = (v * v).cumsum(0).cumsum(1)
    return IntegralPair(sat, sqsat)


def rect_sum(table: np.ndarray, r: Rect) -> int:
    return int(table[r.y2, r.x2] - table[r.y, r.x2] - table[r.y2, r.x] + table[r.y, r.x])


# --- scaled evaluation ----------------------------------------------------

def scale_rect(r: Rect, scale: float) -> Rect:
    """Scale edges (not extents) so adjacent rects stay adjacent."""
    x0, y0 = round_half_up(r.x * scale), round_half_up(r.y * scale)
    x1, y1 = round_half_up(r.x2 * scale), round_half_up(r.y2 * scale)
    return Rect(x0, y0, x1 - x0, y1 - y0)


def scale_feature(feat: HaarFeature, scale: float) -> list:
    """Scaled ``(Rect, weight)`` pairs.

    Features whose weighted areas cancel at base size are rebalanced after
    rounding by adjusting the first rect's weight, so flat windows still
    produce exactly zero response.
    """
    scaled = [(scale_rect(r, scale), w) for r, w in feat.rects]
    base_balance = sum(w * r.w * r.h for r, w in feat.rects)
    if scale != 1 and abs(base_balance) < 1e-9:
        first, _ = scaled[0]
        rest = sum(w * r.w * r.h for r, w in scaled[1:])
        scaled[0] = (first, -rest / (first.w * first.h))
    return scaled


def window_norm(sum_: np.ndarray, sqsum: np.ndarray, area: int) -> np.ndarray:
    """``area * stddev`` with the flat-window guard."""
    if area * 255 * 255 * area >= 2 ** 62:
        var = np.array([area * int(q) - int(s) * int(s) for q, s in zip(sqsum, sum_)],
                       dtype=np.float64)
    else:
        var = (area * sqsum - sum_ * sum_).astype(np.float64)
    return np.where(var > 0, np.sqrt(np.maximum(var, 0)), float(area))


class _ScaledCascade:
    """Corner offsets and weights of every feature at one scale."""

    def __init__(self, model: CascadeModel, scale: float, stride: int):
        self.scale = scale
        self.win_w = round_half_up(model.window_w * scale)
        self.win_h = round_half_up(model.window_h * scale)
        self.area = self.win_w * self.win_h
        n = len(model.features)
        self.off = np.zeros((n, 3, 4), dtype=np.int64)
        self.weight = np.zeros((n, 3), dtype=np.float64)
        for fi, feat in enumerate(model.features):
            for ri, (r, w) in enumerate(scale_feature(feat, scale)):
                self.off[fi, ri] = (r.y2 * stride + r.x2, r.y * stride + r.x2,
                                    r.y2 * stride + r.x, r.y * stride + r.x)
                self.weight[fi, ri] = w
        self.window_off = np.array([self.win_h * stride + self.win_w, self.win_w,
                                    self.win_h * stride, 0], dtype=np.int64)
        self.stages = []
        for st in model.stages:
            f = np.array([wc.feature for wc in st.weak], dtype=np.intp)
            self.stages.append((st.threshold, self.off[f], self.weight[f],
                                np.array([wc.threshold for wc in st.weak]),
                                np.array([wc.left for wc in st.weak]),
                                np.array([wc.right for wc in st.weak])))


def _box(flat: np.ndarray, base: np.ndarray, off: np.ndarray) -> np.ndarray:
    c = flat[base[..., None] + off]
    return c[..., 0] - c[..., 1] - c[..., 2] + c[..., 3]


def _evaluate(sc: _ScaledCascade, ints: IntegralPair, base: np.ndarray,
              chunk_cells: int = 1 << 21) -> np.ndarray:
    """Accept mask for windows whose top-left flat offsets are ``base``."""
    sat = ints.sat.reshape(-1)
    sq = ints.sqsat.reshape(-1)
    nf = window_norm(_box(sat, base, sc.window_off), _box(sq, base, sc.window_off), sc.area)
    alive = np.arange(len(base))
    for st_thr, off, weight, node_thr, left, right in sc.stages:
        if alive.size == 0:
            break
        n_weak = len(node_thr)
        step = max(64, chunk_cells // (n_weak * 12))
        keep = []
        for start in range(0, alive.size, step):
            idx = alive[start:start + step]
            sums = _box(sat, base[idx][:, None, None], off[None])  # (N, weak, 3)
            value = sums[..., 0] * weight[:, 0]
            value = value + sums[..., 1] * weight[:, 1]
            value = value + sums[..., 2] * weight[:, 2]
            votes = np.where(value < node_thr * nf[idx, None], left, right)
            stage_sum = np.cumsum(votes, axis=1)[:, -1]
            keep.append(idx[stage_sum >= st_thr])
        alive = np.concatenate(keep)
    accepted = np.zeros(len(base), dtype=bool)
    accepted[alive] = True
    return accepted


def eval_window(model: CascadeModel, ints: IntegralPair, origin, scale: float) -> bool:
    x, y = origin
    stride = ints.sat.shape[1]
    sc = _scaled(model, scale, stride)
    img_h, img_w = ints.sat.shape[0] - 1, ints.sat.shape[1] - 1
    if not Rect(x, y, sc.win_w, sc.win_h).inside(img_w, img_h):
        raise ParameterError(f"window at {origin} scale {scale} leaves the image")
    return bool(_evaluate(sc, ints, np.array([y * stride + x], dtype=np.int64))[0])


_scale_cache: dict = {}


def _scaled(model: CascadeModel, scale: float, stride: int) -> _ScaledCascade:
    key = (id(model), scale, stride)
    cached = _scale_cache.get(key)
    if cached is None or cached[0] is not model:
        if len(_scale_cache) > 256:
            _scale_cache.clear()
        cached = _scale_cache[key] = (model, _ScaledCascade(model, scale, stride))
    return cached[1]


def raw_hits(model: CascadeModel, img, scale_factor: float = DEFAULT_SCALE_FACTOR,
             min_size: int = DEFAULT_MIN_SIZE, max_size: int | None = None) -> list:
    gray = im.to_grayscale(im.validate_image(img))
    h, w = gray.shape
    ints = integral_images(gray)
    stride = w + 1
    hits = []
    k = 0
    while True:
        scale = scale_factor ** k
        k += 1
        win_w = round_half_up(model.window_w * scale)
        win_h = round_half_up(model.window_h * scale)
        if win_w > w or win_h > h:
            break
        if max_size is not None and (win_w > max_size or win_h > max_size):
            break
        if win_w < min_size or win_h < min_size:
            continue
        step = max(1, round_half_up(scale))
        ys = np.arange(0, h - win_h + 1, step)
        xs = np.arange(0, w - win_w + 1, step)
        oy, ox = np.meshgrid(ys, xs, indexing="ij")
        base = (oy * stride + ox).reshape(-1).astype(np.int64)
        ok = _evaluate(_scaled(model, scale, stride), ints, base)
        for b in base[ok]:
            hits.append(Rect(int(b % stride), int(b // stride), win_w, win_h))
    hits.sort(key=lambda r: (r.y, r.x, r.w))
    return hits


def iou(a: Rect, b: Rect) -> float:
    ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def group_rectangles(hits: list, min_neighbors: int,
                     overlap: float = GROUP_OVERLAP) -> list:
    """Cluster hits by IoU >= ``overlap`` (transitively) and average each
    cluster's edges; clusters smaller than ``min_neighbors`` are dropped."""
    n = len(hits)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    arr = np.array([(r.x, r.y, r.x2, r.y2) for r in hits], dtype=np.float64)
    areas = (arr[:, 2] - arr[:, 0]) * (arr[:, 3] - arr[:, 1])
    for i in range(n - 1):
        ix = np.clip(np.minimum(arr[i, 2], arr[i + 1:, 2]) - np.maximum(arr[i, 0], arr[i + 1:, 0]), 0, None)
        iy = np.clip(np.minimum(arr[i, 3], arr[i + 1:, 3]) - np.maximum(arr[i, 1], arr[i + 1:, 1]), 0, None)
        inter = ix * iy
        ratio = inter / (areas[i] + areas[i + 1:] - inter)
        for j in np.nonzero(ratio >= overlap)[0]:
            a, b = find(i), find(i + 1 + int(j))
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = []
    for members in groups.values():
        if len(members) < max(1, min_neighbors):
            continue
        m = arr[members].mean(axis=0)
        x0, y0, x1, y1 = (round_half_up(v) for v in m)
        out.append(Detection(Rect(x0, y0, x1 - x0, y1 - y0), len(members)))
    out.sort(key=lambda d: (d.box.y, d.box.x, d.box.w))
    return out


def detect_multiscale(model: CascadeModel, img, scale_factor: float = DEFAULT_SCALE_FACTOR,
                      min_neighbors: int = DEFAULT_MIN_NEIGHBORS,
                      min_size: int = DEFAULT_MIN_SIZE, max_size: int | None = None) -> list:
    """Detect objects at every scale; ``min_neighbors=0`` returns raw hits."""
    if scale_factor <= 1:
        raise ParameterError(f"scale_factor must exceed 1, got {scale_factor}")
    if min_neighbors < 0:
        raise ParameterError("min_neighbors must be >= 0")
    hits = raw_hits(model, img, scale_factor, min_size, max_size)
    if min_neighbors == 0:
        return [Detection(r, 1) for r in hits]
    return group_rectangles(hits, min_neighbors)
