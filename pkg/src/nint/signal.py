"""Target signals as coordinate/attribute datasets.

A signal of N observations is stored as paired arrays: coords (N x m,
each axis normalized to [-1, 1]) and attrs (N x n; [0, 1] for images,
[-1, 1] for audio). Normalization is reversible: denormalize() recovers
the original quantization levels bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codecs import read_raster, read_wav_mono16, write_pnm

# Rec. 601 luma weights for RGB -> grayscale.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SignalDataset:
    """N coordinate/attribute pairs with their normalization metadata.

    Immutable after construction; arrays are marked read-only so the
    dataset can be shared freely across threads.
    """

    coords: np.ndarray
    attrs: np.ndarray
    modality: str  # "image" | "audio" | "synthetic"
    shape_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        attrs = np.ascontiguousarray(self.attrs, dtype=np.float64)
        if coords.ndim != 2 or attrs.ndim != 2:
            raise ValueError("coords and attrs must be 2D arrays")
        if coords.shape[0] != attrs.shape[0]:
            raise ValueError(
                f"row mismatch: {coords.shape[0]} coords vs {attrs.shape[0]} attrs"
            )
        if coords.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if self.modality not in ("image", "audio", "synthetic"):
            raise ValueError(f"unknown modality {self.modality!r}")
        if np.abs(coords).max() > 1.0 + 1e-12:
            raise ValueError("coordinates must lie in [-1, 1]")
        if self.modality == "image" and (attrs.min() < 0.0 or attrs.max() > 1.0):
            raise ValueError("image attributes must lie in [0, 1]")
        coords.flags.writeable = False
        attrs.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "attrs", attrs)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def coord_dim(self) -> int:
        return self.coords.shape[1]

    @property
    def attr_dim(self) -> int:
        return self.attrs.shape[1]


@dataclass(frozen=True)
class CoordinateGrid:
    """Regular grid over [-1, 1] per axis, row-major ordering."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) == 0:
            raise ValueError("empty dims list")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"all dims must be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def coordinates(self) -> np.ndarray:
        axes = [_axis_points(d) for d in self.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _axis_points(d: int) -> np.ndarray:
    # A single-point axis has no extent; map it to the midpoint 0.
    if d == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, d)


def make_grid(dims) -> np.ndarray:
    """Row-major coordinates of a regular grid, each axis spanning [-1, 1]."""
    return CoordinateGrid(tuple(dims)).coordinates()


def load_image(path: str | Path, grayscale: bool = False) -> SignalDataset:
    """Load a raster image (binary PGM/PPM or 8-bit PNG) as a dataset.

    Pixel values map to [0, 1] by dividing by 255. Coordinates form a
    row-major grid over [-1, 1]^2 with axis order (row, column). With
    grayscale=True an RGB source is collapsed to Rec. 601 luma, rounded
    to the nearest 8-bit level first so denormalization stays exact.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image file: {path}")
    pixels = read_raster(path)
    height, width = pixels.shape[:2]
    if pixels.ndim == 3 and grayscale:
        pixels = np.rint(pixels @ _LUMA).astype(np.uint8)
    channels = 1 if pixels.ndim == 2 else pixels.shape[2]
    attrs = pixels.reshape(height * width, channels).astype(np.float64) / 255.0
    coords = make_grid([height, width])
    meta = {"height": height, "width": width, "channels": channels}
    return SignalDataset(coords=coords, attrs=attrs, modality="image", shape_meta=meta)


def load_audio(path: str | Path) -> SignalDataset:
    """Load a 16-bit PCM mono WAV file as a 1D dataset.

    Amplitudes map to [-1, 1) by dividing by 32768; time maps to a
    uniform grid over [-1, 1].
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    samples, rate = read_wav_mono16(path)
    attrs = np.clip(samples.astype(np.float64) / 32768.0, -1.0, 1.0).reshape(-1, 1)
    coords = make_grid([samples.size])
    meta = {"num_samples": int(samples.size), "sample_rate": int(rate)}
    return SignalDataset(coords=coords, attrs=attrs, modality="audio", shape_meta=meta)


def denormalize(dataset: SignalDataset, values: np.ndarray) -> np.ndarray:
    """Map normalized attribute values back to the source quantization.

    Images: value * 255 rounded to the nearest 8-bit level (uint8).
    Audio: value * 32768 rounded and clipped to int16. Synthetic signals
    have no quantization and pass through unchanged.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != dataset.attrs.shape:
        raise ValueError(
            f"shape mismatch: values {values.shape} vs dataset {dataset.attrs.shape}"
        )
    if dataset.modality == "image":
        return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    if dataset.modality == "audio":
        return np.clip(np.rint(values * 32768.0), -32768, 32767).astype(np.int16)
    return values.copy()


def image_array(dataset: SignalDataset, values: np.ndarray | None = None) -> np.ndarray:
    """Reshape per-coordinate values of an image dataset to H x W (x C)."""
    if dataset.modality != "image":
        raise ValueError("image_array requires an image dataset")
    if values is None:
        values = dataset.attrs
    h = dataset.shape_meta["height"]
    w = dataset.shape_meta["width"]
    c = dataset.shape_meta["channels"]
    arr = np.asarray(values).reshape(h, w, c)
    return arr[:, :, 0] if c == 1 else arr


def save_snapshot(dataset: SignalDataset, values: np.ndarray, path: str | Path) -> None:
    """Write a predicted image as PGM (1 channel) or PPM (3 channels)."""
    if dataset.modality != "image":
        raise ValueError("snapshots are only defined for image datasets")
    clipped = np.clip(values, 0.0, 1.0)
    raw = denormalize(dataset, clipped)
    write_pnm(path, image_array(dataset, raw))
