"""Synthetic face-like corpora with matching 68-point landmark sidecars.

Used by the tests and the scripts to exercise the batch pipeline without
shipping a photo dataset.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import imaging as im
from .landmarks import LandmarkSet, save_landmarks
from .rng import DeterministicRng


def _ellipse_points(cu, cv, ru, rv, n, start=0.0):
    t = start + np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([cu + ru * np.cos(t), cv + rv * np.sin(t)], axis=1)


def landmark_template() -> np.ndarray:
    """68 points in face-normalised coordinates (ellipse radius 1, y down)."""
    t = np.linspace(np.pi, 0, 17)
    jaw = np.stack([np.cos(t), np.sin(t)], axis=1)
    u = np.linspace(-0.6, -0.15, 5)
    brow_r = np.stack([u, -0.38 - 0.08 * np.sin(np.linspace(0, np.pi, 5))], axis=1)
    brow_l = brow_r[::-1] * [-1, 1]
    bridge = np.stack([np.zeros(4), np.linspace(-0.25, 0.1, 4)], axis=1)
    nose_base = np.stack([np.linspace(-0.15, 0.15, 5), np.full(5, 0.18)], axis=1)
    eye_r = _ellipse_points(-0.35, -0.2, 0.13, 0.06, 6, np.pi)
    eye_l = _ellipse_points(0.35, -0.2, 0.13, 0.06, 6, np.pi)
    lips_out = _ellipse_points(0.0, 0.5, 0.35, 0.12, 12, np.pi)
    lips_in = _ellipse_points(0.0, 0.5, 0.25, 0.05, 8, np.pi)
    pts = np.concatenate([jaw, brow_r, brow_l, bridge, nose_base, eye_r, eye_l, lips_out, lips_in])
    assert pts.shape == (68, 2)
    return pts


def _fill_ellipse(img, cx, cy, rx, ry, color):
    h, w = img.shape[:2]
    yy, xx = np.ogrid[:h, :w]
    mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    img[mask] = color


def make_face(size: int, rng: DeterministicRng, grayscale: bool = False):
    """Return ``(image, points)`` for one synthetic face."""
    gen = rng.generator()
    h = w = size
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    c0, c1 = gen.integers(0, 256, 3), gen.integers(0, 256, 3)
    ramp = (xx / w)[..., None]
    img = c0 * (1 - ramp) + c1 * ramp + gen.normal(0, 6, (h, w, 3))
    img = np.clip(img, 0, 255).astype(np.uint8)

    cx = w / 2 + gen.uniform(-0.05, 0.05) * w
    cy = h / 2 + gen.uniform(-0.05, 0.05) * h
    rx, ry = gen.uniform(0.25, 0.32) * w, gen.uniform(0.33, 0.4) * h
    skin = gen.integers(90, 240, 3)
    _fill_ellipse(img, cx, cy, rx, ry, skin)
    pts = landmark_template() * [rx, ry] + [cx, cy]

    dark = gen.integers(0, 60, 3)
    for lo, hi in ((36, 42), (42, 48)):
        ex, ey = pts[lo:hi].mean(axis=0)
        _fill_ellipse(img, ex, ey, 0.13 * rx, 0.07 * ry, dark)
    for lo, hi in ((17, 22), (22, 27)):
        for bx, by in pts[lo:hi]:
            _fill_ellipse(img, bx, by, 0.05 * rx, 0.03 * ry, dark)
    for nx, ny in pts[27:36]:
        _fill_ellipse(img, nx, ny, 0.03 * rx, 0.03 * ry, skin * 0.7)
    _fill_ellipse(img, cx, pts[48:60, 1].mean(), 0.35 * rx, 0.12 * ry, (170, 40, 50))
    if grayscale:
        img = im.to_grayscale(img)
    return img, pts


def make_corpus(root, n: int, size: int = 192, seed: int = 0,
                landmark_fraction: float = 0.5, fake_fraction: float = 0.5,
                corrupt: int = 0, grayscale_every: int = 0) -> dict:
    """Write ``n`` PNG faces plus labels and landmarks under ``root``.

    Layout: ``images/face_#####.png``, ``labels.csv``,
    ``landmarks/landmarks.txt`` and ``corrupt`` undecodable files.
    """
    root = Path(root)
    images = root / "images"
    lm_dir = root / "landmarks"
    images.mkdir(parents=True, exist_ok=True)
    lm_dir.mkdir(exist_ok=True)
    labels, sets = [], []
    n_fake = int(round(n * fake_fraction))
    n_lms = int(round(n * landmark_fraction))
    for i in range(n):
        gray = bool(grayscale_every) and i % grayscale_every == grayscale_every - 1
        img, pts = make_face(size, DeterministicRng(seed, i), grayscale=gray)
        name = f"face_{i:05d}.png"
        im.write_image(images / name, img)
        labels.append((name, "fake" if i < n_fake else "real"))
        if i % max(1, n // max(1, n_lms)) == 0 and len(sets) < n_lms:
            sets.append(LandmarkSet(name, pts))
    for j in range(corrupt):
        name = f"broken_{j:03d}.png"
        (images / name).write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
        labels.append((name, "real"))
    with open(root / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "label"])
        w.writerows(labels)
    save_landmarks(lm_dir / "landmarks.txt", sets)
    return {"images": images, "labels": root / "labels.csv", "landmarks": lm_dir}
