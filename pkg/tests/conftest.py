import numpy as np
import pytest

from dmsr import data as D


def make_phantom(h, w, seed=42):
    """Synthetic scan: smooth blobs plus bar/square/grating/ring detail.

    The fine structure matters: pixel replication of the degraded input
    is visibly blocky on it, so a trained model has real headroom.
    """
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = 0.15 + 0.1 * xx / w
    for _ in range(5):
        cy, cx = r.uniform(8, h - 8), r.uniform(8, w - 8)
        s = r.uniform(3, 7)
        img += r.uniform(0.3, 0.8) * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    img[20:44, 28:33] += 0.35
    img[10:16, 10:16] += 0.3
    img += 0.25 * ((yy + xx) % 4 < 2)
    rr = np.sqrt((yy - 44) ** 2 + (xx - 18) ** 2)
    img += 0.3 * (np.abs(rr - 9) < 1.2)
    np.clip(img, 0, None, out=img)
    img /= img.max()
    return img


@pytest.fixture
def phantom64():
    return make_phantom(64, 64)


@pytest.fixture
def data_dir(tmp_path):
    """Directory with three small ground-truth images (PNG and PGM)."""
    d = tmp_path / "data"
    d.mkdir()
    D.save_image(d / "knee_a.png", make_phantom(32, 32, seed=1), 16)
    D.save_image(d / "knee_b.png", make_phantom(32, 32, seed=2), 16)
    D.save_image(d / "brain_c.pgm", make_phantom(32, 32, seed=3), 16)
    return d


def tiny_train_config(**overrides):
    """Smallest footprint that still exercises every network stage."""
    from dmsr.network import preset
    from dmsr.train import TrainConfig

    model = preset("desk", **overrides.pop("model_overrides", {}))
    defaults = dict(model=model, iterations=4, batch_size=1,
                    checkpoint_every=2)
    defaults.update(overrides)
    return TrainConfig(**defaults)
