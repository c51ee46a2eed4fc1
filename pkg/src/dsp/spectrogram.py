"""
dB grayscale spectrogram mapping, its gradient, and PGM export
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from src.core.constants import DB_DYNAMIC_RANGE, DB_EPSILON
from src.core.errors import DimensionError
from src.dsp.stft import MagnitudeMatrix, mirror_half_spectrum

logger = logging.getLogger(__name__)

LN10 = np.log(10.0)


@dataclass(frozen=True)
class DbMapping:
    """
    Linear map from [db_min, db_max] onto [0, 1]

    Frozen per signal so the pixel function stays the same across attack iterations.
    """
    db_min: float
    db_max: float
    epsilon: float = DB_EPSILON

    def __post_init__(self):
        if not self.db_max > self.db_min:
            raise ValueError(f"db_max ({self.db_max}) must exceed db_min ({self.db_min})")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def span(self) -> float:
        return self.db_max - self.db_min

    @classmethod
    def from_magnitude(cls, mag: MagnitudeMatrix,
                       dynamic_range_db: float = DB_DYNAMIC_RANGE,
                       epsilon: float = DB_EPSILON) -> "DbMapping":
        """(max_db - dynamic_range, max_db) over the positive-frequency bins"""
        half = mag.config.n_positive
        peak = float(np.max(mag.entries[:half])) if mag.entries.size else 0.0
        max_db = 20.0 * np.log10(peak + epsilon)
        return cls(max_db - dynamic_range_db, max_db, epsilon)

    def to_db(self, values: np.ndarray) -> np.ndarray:
        return 20.0 * np.log10(values + self.epsilon)

    def from_db(self, db: np.ndarray) -> np.ndarray:
        """Magnitude whose dB value is db"""
        return 10.0 ** (np.asarray(db) / 20.0) - self.epsilon


@dataclass(frozen=True)
class SpectrogramImage:
    """
    Detector input

    Attributes:
        pixels: H x W values in [0, 1]; row 0 is the highest frequency
        mapping: The dB mapping that produced it
    """
    pixels: np.ndarray
    mapping: DbMapping

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise DimensionError(f"image must be 2-D, got shape {pixels.shape}")
        if np.any(pixels < 0) or np.any(pixels > 1):
            raise ValueError("pixels must lie in [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def shape(self):
        return self.pixels.shape

    def to_uint8(self) -> np.ndarray:
        """Grey levels 0..255"""
        return np.round(255.0 * self.pixels).astype(np.uint8)


def _raw_levels(mag: MagnitudeMatrix, mapping: DbMapping) -> np.ndarray:
    """Unclamped levels of the positive-frequency half, bin order (row 0 = DC)"""
    half = mag.config.n_positive
    return (mapping.to_db(mag.entries[:half]) - mapping.db_min) / mapping.span


def to_grayscale(mag: MagnitudeMatrix, mapping: DbMapping) -> SpectrogramImage:
    """
    Map magnitudes to grayscale pixels

    pixel = clamp((20 log10(mag + eps) - db_min) / (db_max - db_min), 0, 1),
    keeping bins 0..N/2-1 with the highest frequency in row 0.
    """
    levels = np.clip(_raw_levels(mag, mapping), 0.0, 1.0)
    return SpectrogramImage(levels[::-1], mapping)


def grayscale_grad(mag: MagnitudeMatrix, mapping: DbMapping,
                   upstream: np.ndarray) -> np.ndarray:
    """
    Pull an image-space gradient back onto the magnitude matrix

    d(pixel)/d(mag) = 20 / ((mag + eps) ln10 (db_max - db_min)) where the
    pixel is not clamped, 0 where it is. The negative-frequency half carries
    a copy of the positive-frequency gradient so steps along it keep the
    magnitude Hermitian-coupled; the Nyquist bin is never shown and gets 0.

    Args:
        mag: Magnitude at which to differentiate
        mapping: Frozen dB mapping
        upstream: H x W gradient w.r.t. the image pixels

    Returns:
        K x M gradient w.r.t. the magnitude entries
    """
    half = mag.config.n_positive
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (half, mag.shape[1]):
        raise DimensionError(
            f"upstream gradient {upstream.shape} does not match image {(half, mag.shape[1])}")

    levels = _raw_levels(mag, mapping)
    unclamped = (levels >= 0.0) & (levels <= 1.0)
    slope = 20.0 / ((mag.entries[:half] + mapping.epsilon) * LN10 * mapping.span)

    grad = np.zeros(mag.shape)
    grad[:half] = np.where(unclamped, slope * upstream[::-1], 0.0)
    return mirror_half_spectrum(grad)


def write_pgm(image: Union[SpectrogramImage, np.ndarray], path: Union[str, Path]) -> Path:
    """
    Binary 8-bit PGM (P5)

    Args:
        image: SpectrogramImage or a uint8 array
        path: Destination

    Returns:
        The written path
    """
    path = Path(path)
    pixels = image.to_uint8() if isinstance(image, SpectrogramImage) else np.asarray(image, np.uint8)
    height, width = pixels.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read back a P5 file written by write_pgm"""
    data = Path(path).read_bytes()
    magic, width, height, maxval, rest = data.split(maxsplit=4)
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError(f"{path}: not an 8-bit P5 file")
    width, height = int(width), int(height)
    return np.frombuffer(rest[:width * height], dtype=np.uint8).reshape(height, width)


def draw_boxes(pixels: np.ndarray, boxes: Iterable, value: int = 255) -> np.ndarray:
    """
    Outline boxes on a uint8 image

    Boxes need cx, cy, w, h in the time-frequency frame (cy up from DC).
    """
    canvas = np.array(pixels, dtype=np.uint8, copy=True)
    height, width = canvas.shape
    for box in boxes:
        x0 = int(np.clip(np.floor((box.cx - box.w / 2) * width), 0, width - 1))
        x1 = int(np.clip(np.ceil((box.cx + box.w / 2) * width) - 1, 0, width - 1))
        # Row 0 is the top (highest frequency)
        y0 = int(np.clip(np.floor((1 - box.cy - box.h / 2) * height), 0, height - 1))
        y1 = int(np.clip(np.ceil((1 - box.cy + box.h / 2) * height) - 1, 0, height - 1))
        canvas[y0, x0:x1 + 1] = value
        canvas[y1, x0:x1 + 1] = value
        canvas[y0:y1 + 1, x0] = value
        canvas[y0:y1 + 1, x1] = value
    return canvas
