"""
Raw 16-bit signal files

Files are headerless little-endian signed 16-bit integers; the sample rate
travels in the dataset manifest.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from src.core.constants import PCM_DTYPE, PCM_SCALE_READ, PCM_SCALE_WRITE
from src.core.errors import SignalFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SignalBuffer:
    """
    Real-valued time-domain samples

    Attributes:
        samples: float64 amplitudes, normalized to [-1, 1] for file-backed signals
        sample_rate: Hz
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise SignalFormatError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise SignalFormatError("signal contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise SignalFormatError(f"sample rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds"""
        return self.samples.size / self.sample_rate

    def norm(self) -> float:
        """L2 norm of the samples"""
        return float(np.linalg.norm(self.samples))

    def with_samples(self, samples: np.ndarray) -> "SignalBuffer":
        """Same sample rate, new samples"""
        return SignalBuffer(samples, self.sample_rate)


def read_signal_file(path: PathLike, sample_rate: int) -> SignalBuffer:
    """
    Read a raw i16 signal file

    Args:
        path: File path
        sample_rate: Sample rate in Hz (not stored in the file)

    Returns:
        SignalBuffer with samples divided by 32768
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"signal file not found: {path}")

    raw = path.read_bytes()
    if len(raw) == 0:
        raise SignalFormatError(f"{path}: empty signal file")
    if len(raw) % 2 != 0:
        raise SignalFormatError(f"{path}: odd byte count {len(raw)}, not a 16-bit stream")

    pcm = np.frombuffer(raw, dtype=PCM_DTYPE)
    return SignalBuffer(pcm.astype(np.float64) / PCM_SCALE_READ, sample_rate)


def write_signal_file(buffer: SignalBuffer, path: PathLike) -> int:
    """
    Write a signal as raw i16

    Samples outside [-1, 1] are clamped before quantization.

    Args:
        buffer: Signal to write
        path: Destination path

    Returns:
        Number of clamped samples
    """
    path = Path(path)
    samples = buffer.samples
    out_of_range = int(np.count_nonzero(np.abs(samples) > 1.0))
    if out_of_range:
        logger.warning("%s: clamped %d samples outside [-1, 1]", path, out_of_range)
        samples = np.clip(samples, -1.0, 1.0)

    # Convert to 16-bit PCM
    pcm = np.round(samples * PCM_SCALE_WRITE).astype(PCM_DTYPE)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pcm.tobytes())
    return out_of_range
