import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def oriented_texture(shape, axis, rng, blur=9):
    """Strongly oriented synthetic texture: noise smeared along one axis."""
    noise = rng.normal(size=shape)
    kernel = np.ones(blur) / blur
    out = noise.copy()
    for _ in range(3):
        out = np.apply_along_axis(
            lambda v: np.convolve(v, kernel, mode="same"), axis, out)
    out = (out - out.min()) / (out.max() - out.min())
    return np.clip(np.rint(40 + 175 * out), 0, 255).astype(np.uint8)


def piecewise_smooth_image(size=128, seed=3):
    """Blocky gradient image: smooth regions separated by sharp edges."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size] / size
    img += 120 + 80 * xx - 40 * yy
    for _ in range(6):
        r0, c0 = rng.integers(0, size - 20, size=2)
        h, w = rng.integers(12, size // 2, size=2)
        img[r0:r0 + h, c0:c0 + w] += rng.uniform(-70, 70)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def camera_image():
    skimage = pytest.importorskip("skimage")
    from skimage import data
    return data.camera()
