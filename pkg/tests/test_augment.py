import numpy as np
import pytest

from mammodg.augment import (
    CutoutConfig,
    RandConvConfig,
    augment_image,
    cutout,
    cutout_patch_count,
    image_rng,
    randconv,
    random_kernel,
)
from mammodg.errors import PatchSizeExcluded, ZeroVarianceImage
from mammodg.imagecore import GrayImage
from mammodg.manifest import BoundingBox


def _img(rng, h=100, w=100):
    return GrayImage(rng.integers(1, 60000, size=(h, w)))


def test_patch_count_formula():
    # 10% of 10,000 pixels with mean patch area 2.5
    assert cutout_patch_count(100, 100, CutoutConfig()) == 400
    assert cutout_patch_count(100, 100, CutoutConfig(patch_sizes=(1,))) == 1000


def test_cutout_probability_zero_and_one(rng):
    img = _img(rng)
    assert cutout(img, CutoutConfig(apply_probability=0.0), rng) == img
    out = cutout(img, CutoutConfig(apply_probability=1.0), rng)
    assert 0 < np.mean(out.pixels == 0) <= 0.10


def test_cutout_pixel_fraction_full_cover(rng):
    # 100% budget with 1x1 patches on a 10x10 image: expectation 1 - (1 - 1/100)^100
    img = _img(rng, 10, 10)
    fractions = [np.mean(cutout(img, CutoutConfig((1,), 1.0, apply_probability=1.0), image_rng(s, "a")).pixels == 0) for s in range(300)]
    assert np.mean(fractions) == pytest.approx(1 - 0.99 ** 100, abs=0.01)


def test_cutout_excludes_large_patches(rng):
    img = _img(rng, 3, 3)
    with pytest.warns(PatchSizeExcluded):
        out = cutout(img, CutoutConfig(patch_sizes=(1, 5), apply_probability=1.0), rng)
    assert 0 <= np.mean(out.pixels == 0) <= 0.2


def test_cutout_changes_only_to_fill(rng):
    img = _img(rng)
    out = cutout(img, CutoutConfig(apply_probability=1.0, fill_value=0), rng)
    changed = out.pixels != img.pixels
    assert np.all(out.pixels[changed] == 0)


def test_kernel_variance(rng):
    draws = np.concatenate([random_kernel(5, rng).ravel() for _ in range(4000)])
    assert draws.var() == pytest.approx(1 / 25, rel=0.03)


def test_randconv_alpha_one_is_identity(rng):
    img = _img(rng)
    for s in range(20):
        assert randconv(img, RandConvConfig(alpha=1.0, apply_probability=1.0), image_rng(s, "x")) is img


def test_randconv_k1_is_affine(rng):
    img = _img(rng)
    cfg = RandConvConfig(kernel_sizes=(1,), alpha=0.0, apply_probability=1.0, foreground_rule="full_image")
    out = randconv(img, cfg, image_rng(3, "x"), return_float=True)
    x = np.asarray(img.pixels, dtype=float).ravel()
    slope, icpt = np.polyfit(x, out.ravel(), 1)
    assert np.allclose(slope * x + icpt, out.ravel(), atol=1e-6)


def test_randconv_preserves_foreground_mean(rng):
    img = _img(rng)
    cfg = RandConvConfig(alpha=0.5, apply_probability=1.0, foreground_rule="full_image")
    x = np.asarray(img.pixels, dtype=float)
    for s in range(10):
        out = randconv(img, cfg, image_rng(s, "m"), return_float=True)
        # the whitened image has zero mean, so its filtered copy does too (up to borders)
        assert abs(out.mean() - x.mean()) < 0.05 * x.std()


def test_randconv_zero_variance_warns():
    img = GrayImage(np.full((8, 8), 100, dtype=np.uint16))
    with pytest.warns(ZeroVarianceImage):
        out = randconv(img, RandConvConfig(apply_probability=1.0, foreground_rule="full_image"), image_rng(0, "z"))
    assert out == img


def test_config_validation():
    with pytest.raises(ValueError):
        CutoutConfig(pixel_fraction=0)
    with pytest.raises(ValueError):
        CutoutConfig(patch_sizes=(0,))
    with pytest.raises(ValueError):
        RandConvConfig(kernel_sizes=(2,))
    with pytest.raises(ValueError):
        RandConvConfig(alpha=1.5)


def test_image_rng_independent_of_order():
    a = image_rng(7, "img_a").random(5)
    image_rng(7, "img_b").random(5)
    assert np.array_equal(a, image_rng(7, "img_a").random(5))
    assert not np.array_equal(a, image_rng(8, "img_a").random(5))


def test_augment_image_reproducible_and_remaps(rng):
    img = _img(rng, 40, 60)
    anns = [BoundingBox(0, 0, 10, 5)]
    cfgs = dict(cutout_config=CutoutConfig(), randconv_config=RandConvConfig(), flip_h_prob=1.0, flip_v_prob=0.0)
    a = augment_image(img, anns, image_rng(1, "q"), **cfgs)
    b = augment_image(img, anns, image_rng(1, "q"), **cfgs)
    assert a[0] == b[0]
    assert a[1][0].as_list() == [50, 0, 10, 5]
    assert a[2].flip_h and not a[2].flip_v
