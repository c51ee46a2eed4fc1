"""
Attack reports and perturbation ratio bookkeeping
"""

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import DimensionError
from src.data.signal_io import SignalBuffer
from src.dsp.stft import StftConfig, MagnitudeMatrix, stft, split

logger = logging.getLogger(__name__)

NORM_SCOPES = ("full", "positive")
REPORT_COLUMNS = [
    "file", "method", "alpha", "iterations_used", "tf_ratio", "time_ratio", "bound_rhs",
    "detections_before", "detections_after", "terminated_by",
    "signal_ratio", "snr_db", "clamp_count", "imag_residue",
    "write_clamp_count", "written_tf_ratio", "written_time_ratio",
]


class Termination(Enum):
    VANISHED = "vanished"
    MAX_ITER = "max_iter"


def tf_norm(values: np.ndarray, scope: str = "full") -> float:
    """L2 norm over the whole K x M matrix or only bins 0..N/2-1"""
    if scope == "full":
        return float(np.linalg.norm(values))
    if scope == "positive":
        return float(np.linalg.norm(values[:values.shape[0] // 2]))
    raise ValueError(f"unknown norm scope '{scope}'")


@dataclass(frozen=True)
class AttackReport:
    method: str
    alpha: float
    iterations_used: int
    tf_ratio: float
    time_ratio: float
    bound_rhs: float
    detections_before: int
    detections_after: int
    terminated_by: Termination
    signal_ratio: float = 0.0
    snr_db: float = math.inf
    clamp_count: int = 0
    imag_residue: float = 0.0
    loss_trace: Tuple[float, ...] = ()
    write_clamp_count: int = 0
    written_tf_ratio: Optional[float] = None
    written_time_ratio: Optional[float] = None

    def row(self, file: str = "") -> list:
        """Values in REPORT_COLUMNS order; written_* stay blank until the signal is on disk"""
        written = ["" if v is None else f"{v:.9f}"
                   for v in (self.written_tf_ratio, self.written_time_ratio)]
        return [
            file, self.method, f"{self.alpha:g}", self.iterations_used,
            f"{self.tf_ratio:.9f}", f"{self.time_ratio:.9f}", f"{self.bound_rhs:.9g}",
            self.detections_before, self.detections_after, self.terminated_by.value,
            f"{self.signal_ratio:.9f}", f"{self.snr_db:.4f}", self.clamp_count,
            f"{self.imag_residue:.3e}", self.write_clamp_count, *written,
        ]


@dataclass(frozen=True)
class AdversarialExample:
    """x' = x + delta, the perturbed magnitude it came from, and the run report"""
    signal: SignalBuffer
    perturbed_magnitude: MagnitudeMatrix
    report: AttackReport


def perturbation_ratios(original: SignalBuffer, adv: AdversarialExample,
                        stft_config: StftConfig, scope: str = "full") -> Tuple[float, float]:
    """
    (||Y'| - |Y|| / ||Y||, ||x' - x|| / ||Y||)

    Both ratios share the time-frequency denominator.
    """
    if len(adv.signal) != len(original):
        raise DimensionError(f"adversarial signal has {len(adv.signal)} samples, expected {len(original)}")
    magnitude, _ = split(stft(original, stft_config))
    if adv.perturbed_magnitude.shape != magnitude.shape:
        raise DimensionError(
            f"perturbed magnitude {adv.perturbed_magnitude.shape} does not match {magnitude.shape}")
    denominator = tf_norm(magnitude.entries, scope)
    if denominator == 0:
        return 0.0, 0.0
    tf_ratio = tf_norm(adv.perturbed_magnitude.entries - magnitude.entries, scope) / denominator
    time_ratio = float(np.linalg.norm(adv.signal.samples - original.samples)) / denominator
    return tf_ratio, time_ratio


def realized_ratios(original: SignalBuffer, adversarial: SignalBuffer,
                    stft_config: StftConfig, scope: str = "full") -> Tuple[float, float]:
    """
    Ratios of a signal as it actually exists, e.g. after the i16 write

    The time-frequency ratio compares |STFT(x')| with |Y| instead of using the
    perturbed magnitude the attack asked for.
    """
    if len(adversarial) != len(original):
        raise DimensionError(f"adversarial signal has {len(adversarial)} samples, expected {len(original)}")
    magnitude, _ = split(stft(original, stft_config))
    denominator = tf_norm(magnitude.entries, scope)
    if denominator == 0:
        return 0.0, 0.0
    realized, _ = split(stft(adversarial, stft_config))
    tf_ratio = tf_norm(realized.entries - magnitude.entries, scope) / denominator
    time_ratio = float(np.linalg.norm(adversarial.samples - original.samples)) / denominator
    return tf_ratio, time_ratio


def write_report_csv(rows: Sequence[Tuple[str, AttackReport]], path: Union[str, Path]) -> Path:
    """One line per (file, report)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for name, report in rows:
            writer.writerow(report.row(name))
    logger.info("Wrote %d attack reports to %s", len(rows), path)
    return path
