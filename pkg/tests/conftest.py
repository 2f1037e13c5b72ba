import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")


def natural_crop(name, size=128):
    """Center crop of a scikit-image sample image as a float grayscale array."""
    import skimage.data
    from skimage.color import rgb2gray

    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = np.round(rgb2gray(img[..., :3]) * 255)
    h, w = img.shape
    top, left = (h - size) // 2, (w - size) // 2
    return img[top:top + size, left:left + size].astype(float)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
