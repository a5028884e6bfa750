import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forgerykit import imaging as im
from forgerykit import recipes as R
from forgerykit.errors import ParameterError, RecipeInapplicable
from forgerykit.landmarks import REGIONS, LandmarkSet, region_bbox
from forgerykit.rng import DeterministicRng
from forgerykit.synthetic import make_face


@pytest.fixture(scope="module")
def face():
    img, pts = make_face(160, DeterministicRng(4, 2))
    return img, LandmarkSet("face.png", pts)


# --- cutout ----------------------------------------------------------------

def test_cutout_zero_prob_without_minimum_is_identity(face):
    img, lms = face
    p = R.CutoutParams(per_region_prob=0.0, force_minimum=False)
    out = R.cutout_facial_regions(img, lms, p, DeterministicRng(1))
    assert np.array_equal(out.image, img)
    assert out.params_used["selected"] == []
    with pytest.raises(ParameterError):
        R.cutout_facial_regions(img, lms, R.CutoutParams(per_region_prob=0.0), DeterministicRng(1))


def test_cutout_prob_one_fills_every_box(face):
    img, lms = face
    s = R.cutout_facial_regions(img, lms, R.CutoutParams(per_region_prob=1.0), DeterministicRng(2))
    assert s.params_used["selected"] == list(REGIONS)
    h, w = img.shape[:2]
    boxes = [region_bbox(lms, REGIONS[n], 4, w, h) for n in s.params_used["selected"]]
    colors = s.params_used["colors"]
    for i, (r, c) in enumerate(zip(boxes, colors)):
        patch = s.image[r.y:r.y2, r.x:r.x2]
        # later boxes may paint over earlier ones where pads overlap
        later = np.zeros(patch.shape[:2], bool)
        for r2 in boxes[i + 1:]:
            later[max(r.y, r2.y) - r.y:min(r.y2, r2.y2) - r.y,
                  max(r.x, r2.x) - r.x:min(r.x2, r2.x2) - r.x] = True
        assert (patch[~later] == c).all()
    assert (boxes[-1].w * boxes[-1].h) > 0
    last = s.image[boxes[-1].y:boxes[-1].y2, boxes[-1].x:boxes[-1].x2]
    assert (last == colors[-1]).all()


@given(st.integers(0, 2**63))
@settings(max_examples=25)
def test_cutout_preserves_unselected_pixels(seed):
    img, pts = make_face(96, DeterministicRng(seed, 1))
    lms = LandmarkSet("f", pts)
    s = R.cutout_facial_regions(img, lms, R.CutoutParams(), DeterministicRng(seed))
    assert s.params_used["selected"]
    mask = np.zeros(img.shape[:2], bool)
    for name in s.params_used["selected"]:
        x, y, w, h = s.params_used["boxes"][name]
        mask[y:y + h, x:x + w] = True
    assert np.array_equal(s.image[~mask], img[~mask])
    assert s.label == "fake"


def test_cutout_deterministic(face):
    img, lms = face
    a = R.cutout_facial_regions(img, lms, R.CutoutParams(), DeterministicRng(77, 5))
    b = R.cutout_facial_regions(img, lms, R.CutoutParams(), DeterministicRng(77, 5))
    assert np.array_equal(a.image, b.image) and a.seed == b.seed


def test_cutout_all_degenerate_is_inapplicable(face):
    img, _ = face
    far = LandmarkSet("f", np.full((68, 2), -500.0))
    with pytest.raises(RecipeInapplicable):
        R.cutout_facial_regions(img, far, R.CutoutParams(), DeterministicRng(1))


def test_cutout_grayscale_source(face):
    img, lms = face
    g = im.to_grayscale(img)
    s = R.cutout_facial_regions(g, lms, R.CutoutParams(per_region_prob=1.0), DeterministicRng(3))
    assert s.image.ndim == 2


# --- local crop -------------------------------------------------------------

def test_crop_paper_sizes(rng):
    img = rng.integers(0, 256, (512, 512, 3), dtype=np.uint8)
    s = R.local_crop_enlarge(img, R.CropParams(), DeterministicRng(1))
    assert s.image.shape == (512, 512, 3)
    x, y, w, h = s.params_used["rect"]
    assert (w, h) == (150, 150) and 0 <= x <= 362 and 0 <= y <= 362


@given(st.integers(0, 2**63), st.integers(20, 40), st.integers(20, 40))
@settings(max_examples=30)
def test_crop_equals_independent_crop_then_resize(seed, h, w):
    img = DeterministicRng(seed).generator().integers(0, 256, (h, w, 3), dtype=np.uint8)
    p = R.CropParams(crop_size=15, out_size=37)
    s = R.local_crop_enlarge(img, p, DeterministicRng(seed, 9))
    x, y, cw, ch = s.params_used["rect"]
    assert np.array_equal(s.image, im.resize_bilinear(img[y:y + ch, x:x + cw], 37, 37))


def test_crop_degenerate_and_constant(rng):
    img = rng.integers(0, 256, (40, 40), dtype=np.uint8)
    s = R.local_crop_enlarge(img, R.CropParams(crop_size=40, out_size=64), DeterministicRng(0))
    assert np.array_equal(s.image, im.resize_bilinear(img, 64, 64))
    flat = np.full((200, 180, 3), (9, 99, 199), np.uint8)
    out = R.local_crop_enlarge(flat, R.CropParams(), DeterministicRng(5)).image
    assert (out == (9, 99, 199)).all()
    with pytest.raises(RecipeInapplicable):
        R.local_crop_enlarge(img, R.CropParams(), DeterministicRng(0))


# --- grayscale / translate / overlay ---------------------------------------------

def test_overlay_unit_shifts_on_constant():
    g = np.full((6, 7), 200, np.uint8)
    out = R.overlay_shifts(g, [(1, 0), (-1, 0), (0, 1), (0, -1)])
    assert (out[1:-1, 1:-1] == 200).all()
    # one of four copies vacated on an edge, two at a corner
    assert out[0, 3] == 150 and out[3, 0] == 150 and out[5, 3] == 150
    assert out[0, 0] == 100 and out[5, 6] == 100


@given(st.integers(0, 2**63))
def test_overlay_shift_bounds(seed):
    img = np.full((12, 12, 3), 180, np.uint8)
    s = R.gray_translate_overlay(img, R.OverlayParams(max_shift=1), DeterministicRng(seed))
    shifts = s.params_used["shifts"]
    assert len(shifts) == 4
    assert all(max(abs(dx), abs(dy)) <= 1 and (dx, dy) != (0, 0) for dx, dy in shifts)
    assert s.image.ndim == 2
    assert (s.image[1:-1, 1:-1] == 180).all()
    again = R.gray_translate_overlay(img, R.OverlayParams(max_shift=1), DeterministicRng(seed))
    assert again.params_used["shifts"] == shifts


# --- cartoon -------------------------------------------------------------------

def test_cartoon_constant():
    img = np.full((30, 30, 3), (40, 120, 200), np.uint8)
    out = R.cartoonize(img, R.CartoonParams(), DeterministicRng(0)).image
    assert (out == (40, 120, 200)).all()


def test_cartoon_two_tone_palette():
    img = np.zeros((40, 40, 3), np.uint8)
    img[:, :] = (200, 30, 30)
    img[10:30, 12:28] = (20, 180, 90)
    out = R.cartoonize(img, R.CartoonParams(k_colors=2, median_kernel=3), DeterministicRng(1)).image
    colors = {tuple(c) for c in out.reshape(-1, 3)}
    assert colors <= {(200, 30, 30), (20, 180, 90), (0, 0, 0)}
    assert (0, 0, 0) in colors


@given(st.integers(0, 2**63), st.integers(2, 6))
@settings(max_examples=15)
def test_cartoon_quantized_layer_bound(seed, k):
    img, _ = make_face(64, DeterministicRng(seed))
    p = R.CartoonParams(k_colors=k)
    edges, quant, smooth, palette = R.cartoon_layers(img, p, DeterministicRng(seed).generator())
    assert len(palette) <= k
    assert len({tuple(c) for c in quant.reshape(-1, 3)}) <= k
    for ch in range(3):
        assert len(np.unique(smooth[..., ch])) <= k
        assert set(np.unique(smooth[..., ch])) <= set(np.unique(quant[..., ch]))
    assert set(np.unique(edges)) <= {0, 255}


def test_cartoon_needs_rgb():
    with pytest.raises(RecipeInapplicable):
        R.cartoonize(np.zeros((20, 20), np.uint8))


# --- sketch ----------------------------------------------------------------------

@given(st.integers(1, 255), st.integers(3, 30), st.integers(3, 30))
def test_sketch_flat_is_white(v, h, w):
    img = np.full((h, w), v, np.uint8)
    assert (R.sketch(img).image == 255).all()


def test_sketch_black_and_dodge_table():
    assert (R.sketch(np.zeros((25, 25, 3), np.uint8)).image == 0).all()
    g = np.repeat(np.arange(256, dtype=np.uint8)[:, None], 256, axis=1)
    b = np.repeat(np.arange(256, dtype=np.uint8)[None, :], 256, axis=0)
    out = R.color_dodge(g, b).astype(int)
    assert (out >= g).all()
    d = np.maximum(255 - b.astype(int), 1)
    expected = np.minimum(np.floor(g.astype(float) * 255 / d + 0.5), 255)
    assert np.array_equal(out, expected)


# --- binarize --------------------------------------------------------------------

def test_binarize_strict_threshold():
    p = R.BinarizeParams(center=128, jitter=0)
    img = np.array([[200, 128, 129, 0]], np.uint8)
    s = R.binarize_random(img, p, DeterministicRng(0))
    assert s.params_used["threshold"] == 128
    assert s.image.tolist() == [[255, 0, 255, 0]]


@given(st.integers(0, 2**63))
def test_binarize_values_and_range(seed):
    img = DeterministicRng(seed).generator().integers(0, 256, (9, 9, 3), dtype=np.uint8)
    s = R.binarize_random(img, R.BinarizeParams(), DeterministicRng(seed, 1))
    assert set(np.unique(s.image)) <= {0, 255}
    assert 108 <= s.params_used["threshold"] <= 148


# --- online chain -------------------------------------------------------------------

def test_online_augment_dims_and_determinism(rng):
    img = rng.integers(0, 256, (300, 200, 3), dtype=np.uint8)
    for i in range(6):
        a = R.online_augment(img, DeterministicRng(1, i))
        assert a.shape == (256, 256, 3)
        assert np.array_equal(a, R.online_augment(img, DeterministicRng(1, i)))


def test_online_augment_applies_planned_ops(rng):
    img = rng.integers(0, 256, (256, 256, 3), dtype=np.uint8)
    ops = R.AugmentOps(True, "invert", 1.0)
    assert np.array_equal(R.apply_augment(img, ops), 255 - img[:, ::-1])
    ops = R.AugmentOps(False, "rotate", 0.0)
    assert np.array_equal(R.apply_augment(img, ops), img)


def test_augment_plan_ranges():
    seen = set()
    for i in range(600):
        ops = R.plan_augment(DeterministicRng(3, i).generator())
        seen.add(ops.op)
        if ops.op == "contrast":
            assert 0.6 <= ops.value <= 1.4
        elif ops.op == "rotate":
            assert -30 <= ops.value <= 30
        else:
            assert ops.value in (0.0, 1.0)
    assert seen == {"invert", "contrast", "rotate"}


def test_override_params_coerces():
    p = R.override_params(R.CartoonParams(), {"k_colors": "4", "c": "1.5"})
    assert p.k_colors == 4 and p.c == 1.5
    assert R.override_params(R.CutoutParams(), {"force_minimum": "false"}).force_minimum is False
    with pytest.raises(ParameterError):
        R.override_params(R.CropParams(), {"nope": 1})
    with pytest.raises(ParameterError):
        R.CartoonParams(k_colors=1)
