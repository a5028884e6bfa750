"""68-point facial landmark sidecars and the named regions built on them.

Sidecar record: ``<image filename> x0 y0 x1 y1 ... x67 y67`` on one line.
A file may hold one record or many; ``load_landmark_dir`` merges every
``*.txt`` / ``*.pts`` file in a directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (DegenerateBoxError, LandmarkCountError, LandmarkError,
                     LandmarkFileMissing, LandmarkParseError, ParameterError)
from .imaging import Rect

N_POINTS = 68
REGION_NAMES = ("left_eyebrow", "right_eyebrow", "left_eye", "right_eye", "nose", "lips")
DEFAULT_PAD = 4


@dataclass(frozen=True)
class LandmarkSet:
    image_ref: str
    points: np.ndarray  # (68, 2) float64, x then y

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_POINTS, 2):
            raise LandmarkCountError(
                f"{self.image_ref}: expected {N_POINTS} points, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise LandmarkParseError(f"{self.image_ref}: non-finite coordinate")
        object.__setattr__(self, "points", pts)

    def centroid(self) -> tuple[float, float]:
        cx, cy = self.points.mean(axis=0)
        return float(cx), float(cy)


@dataclass(frozen=True)
class FacialRegion:
    name: str
    indices: tuple


def load_region_table(path=None) -> dict[str, FacialRegion]:
    """Read a ``{name: [indices]}`` JSON table and check it."""
    if path is None:
        text = resources.files(__package__).joinpath("data/regions68.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    table = {name: FacialRegion(name, tuple(int(i) for i in idx)) for name, idx in raw.items()}
    check_region_table(table)
    return table


def check_region_table(table: dict[str, FacialRegion]) -> None:
    seen: set[int] = set()
    for region in table.values():
        idx = set(region.indices)
        if not idx:
            raise ParameterError(f"region {region.name} is empty")
        if min(idx) < 17 or max(idx) > 67:
            raise ParameterError(f"region {region.name} uses indices outside 17..67")
        if idx & seen:
            raise ParameterError(f"region {region.name} overlaps another region")
        seen |= idx


REGIONS = load_region_table()


def parse_record(line: str, where: str = "<record>") -> LandmarkSet:
    tokens = line.split()
    if not tokens:
        raise LandmarkParseError(f"{where}: empty record")
    name, nums = tokens[0], tokens[1:]
    if len(nums) != 2 * N_POINTS:
        raise LandmarkCountError(
            f"{where}: expected {2 * N_POINTS} coordinates, got {len(nums)}")
    try:
        values = [float(t) for t in nums]
    except ValueError as exc:
        raise LandmarkParseError(f"{where}: {exc}") from None
    return LandmarkSet(name, np.array(values).reshape(N_POINTS, 2))


def format_record(lms: LandmarkSet) -> str:
    # repr round-trips every float exactly
    coords = " ".join(repr(float(v)) for v in lms.points.reshape(-1))
    return f"{lms.image_ref} {coords}"


def read_landmark_file(path) -> dict[str, LandmarkSet]:
    path = Path(path)
    if not path.is_file():
        raise LandmarkFileMissing(f"{path}: no such landmark file")
    out: dict[str, LandmarkSet] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        lms = parse_record(line, f"{path}:{lineno}")
        if lms.image_ref in out:
            raise LandmarkParseError(f"{path}:{lineno}: duplicate record for {lms.image_ref}")
        out[lms.image_ref] = lms
    return out


def load_landmarks(path) -> LandmarkSet:
    """Load a single-record sidecar."""
    records = read_landmark_file(path)
    if len(records) != 1:
        raise LandmarkParseError(f"{path}: expected exactly one record, found {len(records)}")
    return next(iter(records.values()))


def save_landmarks(path, lms: LandmarkSet | list) -> None:
    sets = [lms] if isinstance(lms, LandmarkSet) else list(lms)
    Path(path).write_text("".join(format_record(s) + "\n" for s in sets))


def load_landmark_dir(path) -> dict[str, LandmarkSet]:
    """All records under ``path`` (a directory of sidecars or a single file)."""
    path = Path(path)
    if path.is_file():
        return read_landmark_file(path)
    if not path.is_dir():
        raise LandmarkFileMissing(f"{path}: no such landmark file or directory")
    merged: dict[str, LandmarkSet] = {}
    for f in sorted(p for p in path.iterdir() if p.suffix in (".txt", ".pts")):
        for ref, lms in read_landmark_file(f).items():
            if ref in merged:
                raise LandmarkError(f"{f}: duplicate record for {ref}")
            merged[ref] = lms
    return merged


def region_bbox(lms: LandmarkSet, region: FacialRegion | str, pad: int,
                img_w: int, img_h: int) -> Rect:
    """Padded bounding box of a region's points, clamped to the image.

    The box spans ``[floor(min - pad), ceil(max + pad))`` on each axis, so a
    single point with no padding has zero area.
    """
    if isinstance(region, str):
        try:
            region = REGIONS[region]
        except KeyError:
            raise ParameterError(f"unknown facial region {region!r}") from None
    pts = lms.points[list(region.indices)]
    x0 = max(0, math.floor(pts[:, 0].min() - pad))
    y0 = max(0, math.floor(pts[:, 1].min() - pad))
    x1 = min(img_w, math.ceil(pts[:, 0].max() + pad))
    y1 = min(img_h, math.ceil(pts[:, 1].max() + pad))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBoxError(f"{region.name}: box has no area inside {img_w}x{img_h}")
    return Rect(x0, y0, x1 - x0, y1 - y0)
