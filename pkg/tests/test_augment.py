import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from podforge import rle
from podforge.annotations import annotation_from_mask
from podforge.augment import (
    DEFAULT_AUGMENTATIONS,
    AugmentSpec,
    apply,
    brightness,
    flip_ud,
    gaussian_blur,
    gaussian_kernel,
    resize,
    resized_shape,
    rotate,
)
from podforge.errors import InvalidArgument


def random_case(rng, h=24, w=30, n=3):
    image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    anns = []
    for k in range(n):
        m = np.zeros((h, w), dtype=bool)
        x, y = rng.integers(0, w - 5), rng.integers(0, h - 5)
        m[y : y + int(rng.integers(1, 6)), x : x + int(rng.integers(1, 6))] = True
        anns.append(annotation_from_mask(m, k + 1, 0))
    return image, anns


def decoded(anns):
    return [rle.decode(a.segmentation) for a in anns]


def test_flip_ud_involution(rng):
    image, anns = random_case(rng)
    img2, anns2 = flip_ud(*flip_ud(image, anns))
    assert np.array_equal(img2, image) and anns2 == anns


def test_flip_moves_masks_and_boxes(rng):
    image, anns = random_case(rng)
    out, moved = flip_ud(image, anns)
    for a, b, m in zip(anns, moved, decoded(moved)):
        assert np.array_equal(m, rle.decode(a.segmentation)[::-1])
        assert tuple(b.bbox) == tuple(float(v) for v in rle.to_bbox(b.segmentation))


@pytest.mark.parametrize("angle", [0, 90, 180, 270, 360, -90])
def test_rotate_tracks_masks(rng, angle):
    image, anns = random_case(rng)
    out, moved = rotate(image, anns, angle)
    k = (angle // 90) % 4
    assert np.array_equal(out, np.rot90(image, k))
    for a, b in zip(anns, moved):
        assert np.array_equal(rle.decode(b.segmentation), np.rot90(rle.decode(a.segmentation), k))
        assert tuple(b.bbox) == tuple(float(v) for v in rle.to_bbox(b.segmentation))
        assert b.area == a.area


def test_rotate_full_turn_identity(rng):
    image, anns = random_case(rng)
    img, out = image, anns
    for _ in range(4):
        img, out = rotate(img, out, 90)
    assert np.array_equal(img, image) and out == anns


def test_rotate_rejects_free_angles(rng):
    image, anns = random_case(rng)
    with pytest.raises(InvalidArgument):
        rotate(image, anns, 45)
    with pytest.raises(InvalidArgument):
        AugmentSpec("rotate", angle=30)


def test_brightness(rng):
    image, _ = random_case(rng)
    assert np.array_equal(brightness(image, 1.0), image)
    assert brightness(np.full((2, 2, 3), 200, np.uint8), 1.5).max() == 255
    assert brightness(np.full((2, 2, 3), 100, np.uint8), 0.8)[0, 0, 0] == 80
    for bad in (0, -1):
        with pytest.raises(InvalidArgument):
            brightness(image, bad)


def test_blur_constant_image():
    img = np.full((20, 17, 3), 73, np.uint8)
    assert np.array_equal(gaussian_blur(img, 2.0), img)


def test_blur_kernel():
    k = gaussian_kernel(1.0)
    assert k.size == 7 and abs(k.sum() - 1) < 1e-15
    assert np.allclose(k, k[::-1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 3.0))
def test_blur_preserves_mean(seed, sigma):
    img = np.random.default_rng(seed).integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    out = gaussian_blur(img, sigma)
    assert abs(out.astype(float).mean() - img.astype(float).mean()) <= 0.5


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 3.0])
def test_blur_mean_with_bright_border(sigma):
    # Worst case for border handling: all the energy sits on the edge rows.
    n = max(6, int(np.ceil(6 * sigma)))
    img = np.zeros((n, n, 3), np.uint8)
    img[0] = img[-1] = img[:, 0] = img[:, -1] = 255
    assert abs(gaussian_blur(img, sigma).astype(float).mean() - img.astype(float).mean()) <= 0.5


def test_blur_zero_sigma_and_errors(rng):
    image, _ = random_case(rng)
    assert np.array_equal(gaussian_blur(image, 0), image)
    with pytest.raises(InvalidArgument):
        gaussian_blur(image, -1)


def test_resize_sensor_frame():
    assert resized_shape((3024, 4032), 1024)[:2] == (768, 1024)
    img = np.zeros((3024, 4032, 3), np.uint8)
    m = np.zeros((3024, 4032), bool)
    m[400:1000, 800:2000] = True
    out, (a,) = resize(img, [annotation_from_mask(m, 1, 0)], 1024)
    assert out.shape == (768, 1024, 3)
    assert a.segmentation["size"] == [768, 1024]
    # Area scales by f^2 up to nearest-neighbour rounding at the edges.
    f = 1024 / 4032
    assert abs(a.area - m.sum() * f * f) / (m.sum() * f * f) < 0.01


def test_resize_bbox_scaling():
    img = np.zeros((400, 600, 3), np.uint8)
    m = np.zeros((400, 600), bool)
    m[200:250, 100:150] = True
    _, (a,) = resize(img, [annotation_from_mask(m, 1, 0)], 300)
    assert a.bbox == (50.0, 100.0, 25.0, 25.0)
    assert np.array_equal(rle.decode(a.segmentation), m[::2, ::2])


def test_resize_identity_and_upscale(rng):
    image, anns = random_case(rng)
    out, same = resize(image, anns, 30)
    assert np.array_equal(out, image) and same == anns
    with pytest.raises(InvalidArgument):
        resize(image, anns, 31)


def test_photometric_ops_keep_annotations(rng):
    image, anns = random_case(rng)
    for spec in DEFAULT_AUGMENTATIONS:
        out, moved = apply(spec, image, anns)
        assert out.dtype == np.uint8
        assert [a.area for a in moved] == [a.area for a in anns]
        if spec.op in ("brightness", "gaussian_blur"):
            assert moved == anns and out.shape == image.shape


def test_spec_round_trip():
    for spec in DEFAULT_AUGMENTATIONS + (AugmentSpec("resize", long_side=512),):
        assert AugmentSpec.from_dict(spec.to_dict()) == spec
    for bad in ({"op": "shear"}, {"op": "brightness", "factor": 0}, {"op": "resize"}):
        with pytest.raises(InvalidArgument):
            AugmentSpec.from_dict(bad)
