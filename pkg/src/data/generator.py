"""
Synthetic multi-burst signal generator

Each burst is one of three modulation kinds rendered with numpy phase
accumulation, shaped by a Tukey ramp and dropped onto a white Gaussian
noise floor. Every burst yields exactly one time-frequency label.
"""

import logging
from dataclasses import dataclass, asdict
from enum import IntEnum
from typing import List, Sequence, Tuple

import numpy as np
from scipy.signal.windows import tukey

from src.core.constants import DESK_SAMPLE_RATE, NOISE_FLOOR_STD
from src.core.errors import ConfigError, InfeasibleConfigError
from src.data.signal_io import SignalBuffer

logger = logging.getLogger(__name__)

PEAK_TARGET = 0.95
RAMP_FRACTION = 0.1
MAX_PLACEMENT_ATTEMPTS = 50
MAX_OVERLAP_IOU = 0.3


class BurstKind(IntEnum):
    """Burst modulation kinds; the value is the class id"""
    TONE = 0
    CHIRP = 1
    FSK = 2

    @classmethod
    def from_name(cls, name: str) -> "BurstKind":
        aliases = {"tone": cls.TONE, "linear-chirp": cls.CHIRP, "chirp": cls.CHIRP,
                   "two-tone-fsk": cls.FSK, "fsk": cls.FSK}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ConfigError("data.burst_kinds", f"unknown burst kind '{name}'") from None


@dataclass(frozen=True)
class GroundTruthLabel:
    """
    One signal target in normalized time-frequency coordinates

    cx is the time centre, cy the frequency centre (fraction of Nyquist).
    """
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class id must be non-negative, got {self.class_id}")
        for name in ("cx", "cy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"label {name}={value} outside the unit square")
        for name in ("w", "h"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"label {name}={value} must lie in (0, 1]")

    @classmethod
    def from_extent(cls, class_id: int, x0: float, x1: float,
                    y0: float, y1: float) -> "GroundTruthLabel":
        """Build a label from normalized extents, clamped into the unit square"""
        x0, x1 = max(0.0, x0), min(1.0, x1)
        y0, y1 = max(0.0, y0), min(1.0, y1)
        return cls(int(class_id), (x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def extent(self) -> Tuple[float, float, float, float]:
        """(x0, x1, y0, y1)"""
        return (self.cx - self.w / 2, self.cx + self.w / 2,
                self.cy - self.h / 2, self.cy + self.h / 2)


@dataclass
class GenConfig:
    """
    Synthetic dataset parameters

    signal_length should equal (W - 1) * hop + win_len so the spectrogram
    frame count matches the detector input width.
    """
    signal_length: int
    sample_rate: int = DESK_SAMPLE_RATE
    n_bursts_range: Tuple[int, int] = (1, 4)
    freq_range: Tuple[float, float] = (20_000.0, 380_000.0)
    duration_range: Tuple[float, float] = (0.004, 0.016)
    amplitude_range: Tuple[float, float] = (0.08, 0.25)
    noise_floor_std: float = NOISE_FLOOR_STD
    burst_kinds: Sequence[str] = ("tone", "linear-chirp", "two-tone-fsk")
    min_bandwidth_hz: float = 18_750.0
    seed: int = 0

    def validate(self):
        """Raise ConfigError naming the first offending key"""
        ranges = {
            "n_bursts_range": self.n_bursts_range,
            "freq_range": self.freq_range,
            "duration_range": self.duration_range,
            "amplitude_range": self.amplitude_range,
        }
        for key, bounds in ranges.items():
            if len(bounds) != 2:
                raise ConfigError(f"data.{key}", f"expected [min, max], got {list(bounds)}")
            low, high = bounds
            if low > high:
                raise ConfigError(f"data.{key}", f"min {low} exceeds max {high}")
            if low < 0:
                raise ConfigError(f"data.{key}", f"negative bound {low}")
        if self.signal_length <= 0:
            raise ConfigError("data.signal_length", "must be positive")
        if self.sample_rate <= 0:
            raise ConfigError("data.sample_rate", "must be positive")
        if self.freq_range[1] >= self.sample_rate / 2:
            raise ConfigError("data.freq_range", "upper frequency must stay below Nyquist")
        if self.noise_floor_std < 0:
            raise ConfigError("data.noise_floor_std", "must be non-negative")
        if not self.burst_kinds:
            raise ConfigError("data.burst_kinds", "at least one burst kind is required")
        for name in self.burst_kinds:
            BurstKind.from_name(name)
        if self.n_bursts_range[1] > 0:
            shortest = int(round(self.duration_range[0] * self.sample_rate))
            if shortest > self.signal_length:
                raise InfeasibleConfigError(
                    "data.duration_range",
                    f"bursts of {shortest} samples do not fit in {self.signal_length} samples")
            if self.duration_range[1] <= 0:
                raise ConfigError("data.duration_range", "durations must be positive")

    def with_seed(self, seed: int) -> "GenConfig":
        params = asdict(self)
        params["seed"] = int(seed)
        return GenConfig(**params)


def _render_burst(kind: BurstKind, rng: np.random.Generator, n: int,
                  config: GenConfig) -> Tuple[np.ndarray, float, float]:
    """
    Render one burst

    Returns:
        (waveform, lowest frequency, highest frequency)
    """
    fs = config.sample_rate
    f_lo, f_hi = config.freq_range
    t = np.arange(n) / fs

    if kind == BurstKind.TONE:
        f0 = rng.uniform(f_lo, f_hi)
        phase0 = rng.uniform(0, 2 * np.pi)
        return np.sin(2 * np.pi * f0 * t + phase0), f0, f0

    if kind == BurstKind.CHIRP:
        # Frequency sweep via cumulative phase
        span = (f_hi - f_lo) * rng.uniform(0.05, 0.2)
        start = rng.uniform(f_lo, f_hi - span)
        f_start, f_end = (start, start + span) if rng.random() < 0.5 else (start + span, start)
        freq_sweep = np.linspace(f_start, f_end, n)
        phase = np.cumsum(2 * np.pi * freq_sweep / fs)
        return np.sin(phase), min(f_start, f_end), max(f_start, f_end)

    # Two-tone FSK: random symbol stream alternating between f0 and f0 + shift
    shift = (f_hi - f_lo) * rng.uniform(0.04, 0.1)
    f0 = rng.uniform(f_lo, f_hi - shift)
    n_symbols = int(rng.integers(8, 17))
    symbols = rng.integers(0, 2, n_symbols)
    per_sample = np.repeat(symbols, int(np.ceil(n / n_symbols)))[:n]
    frequency = f0 + shift * per_sample
    phase = np.cumsum(2 * np.pi * frequency / fs)
    return np.sin(phase), f0, f0 + shift


def _overlap_iou(a: GroundTruthLabel, b: GroundTruthLabel) -> float:
    ax0, ax1, ay0, ay1 = a.extent()
    bx0, bx1, by0, by1 = b.extent()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def generate_burst_signal(config: GenConfig) -> Tuple[SignalBuffer, List[GroundTruthLabel]]:
    """
    Generate one noisy multi-burst signal and its labels

    Deterministic for a given config.seed.

    Args:
        config: Generator parameters

    Returns:
        (signal, labels) with one label per burst
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_total = config.signal_length
    fs = config.sample_rate
    nyquist = fs / 2
    kinds = [BurstKind.from_name(k) for k in config.burst_kinds]

    audio = np.zeros(n_total)
    labels: List[GroundTruthLabel] = []
    n_bursts = int(rng.integers(config.n_bursts_range[0], config.n_bursts_range[1] + 1))

    for _ in range(n_bursts):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            kind = kinds[int(rng.integers(len(kinds)))]
            duration = rng.uniform(*config.duration_range)
            n = min(n_total, max(2, int(round(duration * fs))))
            start = int(rng.integers(0, n_total - n + 1))
            amplitude = rng.uniform(*config.amplitude_range)
            burst, f_low, f_high = _render_burst(kind, rng, n, config)

            pad = max(0.0, config.min_bandwidth_hz - (f_high - f_low)) / 2
            label = GroundTruthLabel.from_extent(
                int(kind),
                start / n_total, (start + n) / n_total,
                (f_low - pad) / nyquist, (f_high + pad) / nyquist,
            )
            if all(_overlap_iou(label, other) <= MAX_OVERLAP_IOU for other in labels):
                break
        else:
            logger.debug("seed %d: could not place a non-overlapping burst", config.seed)
            continue

        # Apply envelope
        envelope = tukey(n, RAMP_FRACTION)
        audio[start:start + n] += amplitude * burst * envelope
        labels.append(label)

    audio += rng.normal(0.0, config.noise_floor_std, n_total)

    peak = np.max(np.abs(audio))
    if peak > PEAK_TARGET:
        audio *= PEAK_TARGET / peak

    return SignalBuffer(audio, fs), labels
