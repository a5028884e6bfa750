import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forgerykit import haar
from forgerykit import imaging as im
from forgerykit.errors import (CascadeGeometryError, CascadeParseError, ParameterError,
                               UnsupportedCascadeError)
from forgerykit.imaging import Rect
from forgerykit.rng import DeterministicRng

from _oracles import naive_accept, naive_rect_sum


def tiny_cascade(feature_type="HAAR", tilted="0", rect="0 0 4 2 -1.", extra_rect="0 2 4 2 1.",
                 nodes="0 -1 0 0.01", stages=1):
    stage = f"""<_><maxWeakCount>1</maxWeakCount><stageThreshold>-0.5</stageThreshold>
      <weakClassifiers><_><internalNodes>{nodes}</internalNodes>
      <leafValues>-1. 1.</leafValues></_></weakClassifiers></_>"""
    return f"""<?xml version="1.0"?><opencv_storage><cascade type_id="opencv-cascade-classifier">
    <stageType>BOOST</stageType><featureType>{feature_type}</featureType>
    <height>4</height><width>4</width><stageNum>{stages}</stageNum>
    <stages>{stage * stages}</stages>
    <features><_><rects><_>{rect}</_><_>{extra_rect}</_></rects><tilted>{tilted}</tilted></_></features>
    </cascade></opencv_storage>"""


def test_reference_model_matches_text_scan(reference_cascade_path):
    text = reference_cascade_path.read_text()
    model = haar.load_cascade(reference_cascade_path)
    assert len(model.stages) == len(re.findall(r"<stageThreshold>", text))
    assert len(model.stages) == int(re.search(r"<stageNum>(\d+)</stageNum>", text).group(1)) == 25
    assert model.n_weak == len(re.findall(r"<internalNodes>", text))
    assert (model.window_w, model.window_h) == (24, 24)
    assert haar.default_cascade().n_weak == model.n_weak


def test_tiny_cascade_parses():
    m = haar.parse_cascade(tiny_cascade(stages=2))
    assert len(m.stages) == 2 and len(m.features) == 1
    assert m.features[0].rects[0] == (Rect(0, 0, 4, 2), -1.0)


@pytest.mark.parametrize("xml, err", [
    (tiny_cascade(feature_type="LBP"), UnsupportedCascadeError),
    (tiny_cascade(tilted="1"), UnsupportedCascadeError),
    (tiny_cascade(nodes="0 1 0 0.01 1 2 0 0.2"), UnsupportedCascadeError),
    (tiny_cascade(rect="2 0 4 2 -1."), CascadeGeometryError),
    (tiny_cascade(nodes="0 -1 3 0.01"), CascadeParseError),
    (tiny_cascade()[:300], CascadeParseError),
    ("<opencv_storage/>", CascadeParseError),
])
def test_parse_errors_are_distinct(xml, err):
    with pytest.raises(err):
        haar.parse_cascade(xml)


def test_integral_example():
    img = np.array([[1, 2], [3, 4]], np.uint8)
    ints = haar.integral_images(img)
    assert haar.rect_sum(ints.sat, Rect(0, 0, 2, 2)) == 10
    assert haar.rect_sum(ints.sqsat, Rect(0, 0, 2, 2)) == 30
    assert haar.rect_sum(ints.sat, Rect(1, 1, 1, 1)) == 4


@given(st.integers(0, 2**63), st.integers(1, 16), st.integers(1, 16))
@settings(max_examples=30)
def test_rect_sums_exhaustive(seed, h, w):
    img = DeterministicRng(seed).generator().integers(0, 256, (h, w), dtype=np.uint8)
    ints = haar.integral_images(img)
    for y in range(h):
        for x in range(w):
            for rh in range(1, h - y + 1):
                for rw in range(1, w - x + 1):
                    r = Rect(x, y, rw, rh)
                    assert haar.rect_sum(ints.sat, r) == naive_rect_sum(img, x, y, rw, rh)


def test_scaled_features_cancel_on_flat(reference_cascade_path):
    model = haar.load_cascade(reference_cascade_path)
    for scale in (1.1, 1.331, 2.0, 3.7):
        for feat in model.features[:200]:
            rects = haar.scale_feature(feat, scale)
            if abs(sum(w * r.w * r.h for r, w in feat.rects)) < 1e-9:
                assert abs(sum(w * r.w * r.h for r, w in rects)) < 1e-6


@pytest.fixture(scope="module")
def astronaut_gray():
    skdata = pytest.importorskip("skimage.data")
    return im.to_grayscale(im.resize_bilinear(skdata.astronaut(), 256, 256))


def test_eval_window_matches_naive(astronaut_gray):
    model = haar.default_cascade()
    gray = astronaut_gray
    ints = haar.integral_images(gray)
    gen = np.random.default_rng(11)

    for _ in range(150):
        scale = float(1.1 ** gen.integers(0, 12))
        ww = haar.round_half_up(24 * scale)
        x, y = (int(v) for v in gen.integers(0, 256 - ww + 1, 2))
        got = haar.eval_window(model, ints, (x, y), scale)
        assert got == naive_accept(model, gray, x, y, scale)

    # windows the detector accepts must also pass the naive path
    for r in haar.raw_hits(model, gray)[:20]:
        s = next(1.1 ** k for k in range(40) if haar.round_half_up(24 * 1.1 ** k) == r.w)
        assert naive_accept(model, gray, r.x, r.y, s)
        assert haar.eval_window(model, ints, (r.x, r.y), s)


def test_eval_window_bounds():
    ints = haar.integral_images(np.zeros((30, 30), np.uint8))
    with pytest.raises(ParameterError):
        haar.eval_window(haar.default_cascade(), ints, (10, 10), 1.0)


@pytest.mark.parametrize("v", [0, 77, 255])
def test_flat_images_have_no_detections(v):
    img = np.full((120, 160), v, np.uint8)
    assert haar.detect_multiscale(haar.default_cascade(), img, min_neighbors=0) == []


def test_small_image_and_bad_params():
    m = haar.default_cascade()
    assert haar.detect_multiscale(m, np.zeros((20, 40), np.uint8)) == []
    with pytest.raises(ParameterError):
        haar.detect_multiscale(m, np.zeros((40, 40), np.uint8), scale_factor=1.0)
    with pytest.raises(ParameterError):
        haar.detect_multiscale(m, np.zeros((40, 40), np.uint8), min_neighbors=-1)


def test_astronaut_face_found():
    skdata = pytest.importorskip("skimage.data")
    dets = haar.detect_multiscale(haar.default_cascade(), skdata.astronaut())
    # the face occupies roughly x 160-280, y 50-180 in the 512px image
    assert any(150 <= d.box.x + d.box.w / 2 <= 290 and 40 <= d.box.y + d.box.h / 2 <= 200
               for d in dets)


def test_min_neighbors_monotone_and_deterministic(astronaut_gray):
    m = haar.default_cascade()
    counts = [len(haar.detect_multiscale(m, astronaut_gray, min_neighbors=k)) for k in range(0, 8)]
    assert all(a >= b for a, b in zip(counts[1:], counts[2:]))
    assert counts[0] >= counts[1]
    a = haar.detect_multiscale(m, astronaut_gray)
    assert a == haar.detect_multiscale(m, astronaut_gray.copy())


def test_grouping_rules():
    hits = [Rect(10, 10, 30, 30), Rect(12, 10, 30, 30), Rect(11, 11, 30, 30), Rect(100, 100, 30, 30)]
    out = haar.group_rectangles(hits, 2)
    assert out == [haar.Detection(Rect(11, 10, 30, 30), 3)]
    assert len(haar.group_rectangles(hits, 1)) == 2
    assert haar.iou(Rect(0, 0, 10, 10), Rect(5, 0, 10, 10)) == pytest.approx(1 / 3)
