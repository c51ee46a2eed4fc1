"""
Blackman-windowed STFT and weighted overlap-add inverse

The full N-bin complex matrix is kept (rows = frequency bins k, columns =
frames m). Each frame is transformed in its own time reference, so
y(k, m) = sum_i x[mR + i] w[i] exp(-j 2 pi k i / N).
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal.windows import blackman

from src.core.constants import (
    DESK_N_FFT, DESK_OVERLAP, WIDE_N_FFT, WIDE_OVERLAP, ISTFT_FLOOR,
)
from src.core.errors import ConfigError, DimensionError, SignalFormatError
from src.data.signal_io import SignalBuffer

logger = logging.getLogger(__name__)

WINDOW_KINDS = ("blackman",)


@dataclass(frozen=True)
class StftConfig:
    """
    Analysis parameters

    Attributes:
        n_fft: FFT size N (power of two); the window length equals n_fft
        overlap: Samples shared by consecutive frames
        window_kind: Only "blackman"
        floor: WOLA normalization floor eta
    """
    n_fft: int = WIDE_N_FFT
    overlap: int = WIDE_OVERLAP
    window_kind: str = "blackman"
    floor: float = ISTFT_FLOOR

    def __post_init__(self):
        if self.n_fft < 3 or self.n_fft & (self.n_fft - 1):
            raise ConfigError("stft.n_fft", f"must be a power of two >= 4, got {self.n_fft}")
        if not 0 < self.overlap < self.n_fft:
            raise ConfigError("stft.overlap", f"must lie in (0, {self.n_fft}), got {self.overlap}")
        if self.window_kind.lower() not in WINDOW_KINDS:
            raise ConfigError("stft.window_kind", f"unsupported window '{self.window_kind}'")
        if self.floor <= 0:
            raise ConfigError("stft.floor", "must be positive")

    @property
    def win_len(self) -> int:
        return self.n_fft

    @property
    def hop(self) -> int:
        return self.win_len - self.overlap

    @property
    def n_positive(self) -> int:
        """Positive-frequency bins shown to the detector"""
        return self.n_fft // 2

    def n_frames(self, length: int) -> int:
        """Frames produced for a signal of the given length (no padding)"""
        if length < self.win_len:
            return 0
        return (length - self.win_len) // self.hop + 1

    def signal_length(self, n_frames: int) -> int:
        """Samples spanned by n_frames frames"""
        return (n_frames - 1) * self.hop + self.win_len

    @classmethod
    def wideband(cls) -> "StftConfig":
        return cls(WIDE_N_FFT, WIDE_OVERLAP)

    @classmethod
    def desk(cls) -> "StftConfig":
        return cls(DESK_N_FFT, DESK_OVERLAP)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeFreqMatrix:
    """Complex K x M STFT matrix y(k, m)"""
    entries: np.ndarray
    config: StftConfig
    sample_rate: int = 1

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] != self.config.n_fft:
            raise DimensionError(
                f"matrix must have {self.config.n_fft} rows, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DimensionError("time-frequency matrix contains non-finite entries")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    @property
    def n_frames(self) -> int:
        return self.entries.shape[1]

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


@dataclass(frozen=True)
class MagnitudeMatrix:
    """Non-negative K x M magnitudes |y(k, m)|"""
    entries: np.ndarray
    config: StftConfig

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != self.config.n_fft:
            raise DimensionError(
                f"magnitude must have {self.config.n_fft} rows, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DimensionError("magnitude contains non-finite entries")
        if np.any(entries < 0):
            raise ValueError("magnitude entries must be non-negative")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


@dataclass(frozen=True)
class PhaseMatrix:
    """K x M phases in (-pi, pi]"""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if np.any(entries <= -np.pi) or np.any(entries > np.pi):
            raise ValueError("phase entries must lie in (-pi, pi]")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


def make_window(config: Union[StftConfig, int]) -> np.ndarray:
    """
    Symmetric Blackman window

    w[n] = 0.42 - 0.5 cos(2 pi n / (L-1)) + 0.08 cos(4 pi n / (L-1))

    Args:
        config: StftConfig or a window length L >= 3

    Returns:
        Window coefficients of length L
    """
    length = config.win_len if isinstance(config, StftConfig) else int(config)
    if length < 3:
        raise ValueError(f"window length must be >= 3, got {length}")
    return blackman(length, sym=True)


def _frames(samples: np.ndarray, config: StftConfig) -> np.ndarray:
    """(M, win_len) view of the frames, frame m starting at m * hop"""
    return sliding_window_view(samples, config.win_len)[::config.hop]


def stft(signal: SignalBuffer, config: StftConfig) -> TimeFreqMatrix:
    """
    Short-time Fourier transform without padding

    Args:
        signal: Time-domain samples
        config: Analysis parameters

    Returns:
        N x M complex matrix, M = floor((L - win_len) / hop) + 1
    """
    if len(signal) < config.win_len:
        raise SignalFormatError(
            f"signal of {len(signal)} samples is shorter than one window ({config.win_len})")
    window = make_window(config)
    frames = _frames(signal.samples, config) * window
    entries = np.fft.fft(frames, n=config.n_fft, axis=1).T
    return TimeFreqMatrix(entries, config, signal.sample_rate)


def istft(matrix: TimeFreqMatrix, config: StftConfig = None, out_len: int = None,
          return_residue: bool = False):
    """
    Weighted overlap-add inverse

    x[n] = sum_m w[n - mR] frame_m[n - mR] / max(sum_m w^2[n - mR], eta);
    the real part is kept and the imaginary part reported as a residue.

    Args:
        matrix: Complex STFT matrix
        config: Synthesis parameters (defaults to the matrix's own)
        out_len: Expected output length, (M - 1) * hop + win_len
        return_residue: Also return ||imag|| / ||real||

    Returns:
        SignalBuffer, or (SignalBuffer, residue) when return_residue is set
    """
    config = config or matrix.config
    if matrix.entries.shape[0] != config.n_fft:
        raise DimensionError(
            f"matrix has {matrix.entries.shape[0]} bins, config expects {config.n_fft}")
    n_frames = matrix.n_frames
    if n_frames < 1:
        raise DimensionError("matrix has no frames")
    expected = config.signal_length(n_frames)
    if out_len is not None and out_len != expected:
        raise DimensionError(f"out_len {out_len} does not match {n_frames} frames ({expected})")

    window = make_window(config)
    frames = np.fft.ifft(matrix.entries.T, axis=1)[:, :config.win_len]

    signal = np.zeros(expected, dtype=np.complex128)
    weight = np.zeros(expected)
    for m in range(n_frames):
        start = m * config.hop
        signal[start:start + config.win_len] += window * frames[m]
        weight[start:start + config.win_len] += window ** 2

    covered = weight > config.floor
    out = np.zeros(expected, dtype=np.complex128)
    out[covered] = signal[covered] / weight[covered]

    real = out.real.copy()
    buffer = SignalBuffer(real, matrix.sample_rate)
    if not return_residue:
        return buffer
    real_norm = np.linalg.norm(real)
    residue = float(np.linalg.norm(out.imag) / real_norm) if real_norm > 0 else 0.0
    return buffer, residue


def split(matrix: TimeFreqMatrix) -> Tuple[MagnitudeMatrix, PhaseMatrix]:
    """
    Polar decomposition; zero entries get phase 0

    Returns:
        (magnitude, phase) with phase in (-pi, pi]
    """
    entries = matrix.entries
    magnitude = np.abs(entries)
    phase = np.arctan2(entries.imag, entries.real)
    phase[phase <= -np.pi] = np.pi
    return MagnitudeMatrix(magnitude, matrix.config), PhaseMatrix(phase)


def recombine(mag: MagnitudeMatrix, phase: PhaseMatrix, sample_rate: int = 1) -> TimeFreqMatrix:
    """
    Inverse of split: mag * (cos phase + j sin phase)

    Negative magnitudes are rejected by MagnitudeMatrix itself.
    """
    if mag.shape != phase.shape:
        raise DimensionError(f"magnitude {mag.shape} and phase {phase.shape} differ")
    entries = mag.entries * (np.cos(phase.entries) + 1j * np.sin(phase.entries))
    return TimeFreqMatrix(entries, mag.config, sample_rate)


def mirror_half_spectrum(values: np.ndarray) -> np.ndarray:
    """
    Copy bins 1..N/2-1 onto N-k so a real-valued per-bin array is Hermitian-coupled

    Bins 0 and N/2 are their own mirrors and are left as given.
    """
    n_fft = values.shape[0]
    half = n_fft // 2
    mirrored = np.array(values, dtype=np.float64, copy=True)
    mirrored[half + 1:] = values[1:half][::-1]
    return mirrored


def pad_to(samples: np.ndarray, length: int) -> np.ndarray:
    """Zero-fill (or cut) to length"""
    if samples.size >= length:
        return samples[:length]
    return np.concatenate([samples, np.zeros(length - samples.size)])


def roundtrip(signal: SignalBuffer, config: StftConfig) -> SignalBuffer:
    """istft(stft(x)) zero-filled back to len(x)"""
    rebuilt = istft(stft(signal, config), config)
    return signal.with_samples(pad_to(rebuilt.samples, len(signal)))


def roundtrip_error(signal: SignalBuffer, config: StftConfig) -> float:
    """Relative L2 round-trip error ||x_hat - x|| / ||x||"""
    norm = signal.norm()
    if norm == 0:
        return 0.0
    rebuilt = roundtrip(signal, config)
    return float(np.linalg.norm(rebuilt.samples - signal.samples) / norm)
