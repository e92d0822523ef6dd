import numpy as np
import pytest

from nint.signal import SignalDataset, make_grid


def crop64() -> np.ndarray:
    """Deterministic 64x64 grayscale test scene, quantized to 8 bits.

    Piecewise-smooth with sharp disk edges and a striped band, so
    residual- and kernel-guided selection have structure to find.
    """
    h = w = 64
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    y01, x01 = yy / (h - 1), xx / (w - 1)
    img = 0.35 + 0.3 * x01 + 0.15 * np.sin(2 * np.pi * 1.5 * y01)
    d1 = np.sqrt((yy - 20) ** 2 + (xx - 22) ** 2)
    d2 = np.sqrt((yy - 44) ** 2 + (xx - 46) ** 2)
    img = np.where(d1 < 11, 0.85 - 0.012 * d1, img)
    img = np.where(d2 < 9, 0.15 + 0.02 * d2, img)
    band = (yy + 2 * xx > 150) & (yy + 2 * xx < 175)
    img = np.where(band, img * 0.3 + 0.55 * np.sin(2 * np.pi * 6 * x01) ** 2, img)
    return np.round(np.clip(img, 0.0, 1.0) * 255) / 255


@pytest.fixture(scope="session")
def crop64_image() -> np.ndarray:
    return crop64()


@pytest.fixture(scope="session")
def crop64_dataset(crop64_image) -> SignalDataset:
    return SignalDataset(
        coords=make_grid([64, 64]),
        attrs=crop64_image.reshape(-1, 1),
        modality="image",
        shape_meta={"height": 64, "width": 64, "channels": 1},
    )


def tiny_dataset(n_points: int = 16, out_dim: int = 1, seed: int = 0) -> SignalDataset:
    """Small synthetic 1-D dataset with smooth targets in [0, 1]."""
    rng = np.random.default_rng(seed)
    coords = make_grid([n_points])
    base = 0.5 + 0.4 * np.sin(1.7 * coords + 0.3)
    attrs = np.clip(base + 0.05 * rng.standard_normal((n_points, out_dim)), 0.0, 1.0)
    return SignalDataset(
        coords=coords, attrs=attrs, modality="synthetic", shape_meta={"n": n_points}
    )
