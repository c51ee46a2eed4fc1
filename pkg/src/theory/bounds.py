"""
Time-domain perturbation bound for phase-preserving magnitude perturbations

A magnitude perturbation beta of the STFT maps, through the phase-preserving
inverse, to a time-domain perturbation delta with ||delta|| <= sqrt(3/N) ||beta||
claimed for window length N. The helpers here evaluate that constant and check
the inequality empirically; violations are reported, never asserted.
"""

import csv
import logging
import math
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import DimensionError
from src.core.parallel import map_ordered
from src.data.signal_io import SignalBuffer
from src.dsp.stft import (
    StftConfig, MagnitudeMatrix, PhaseMatrix, stft, istft, split, recombine,
    mirror_half_spectrum, pad_to,
)

logger = logging.getLogger(__name__)

HOLD_TOLERANCE = 1e-9
BOUND_COLUMNS = ["trial", "alpha", "beta_norm", "delta_norm", "rhs", "slack_ratio",
                 "holds", "roundtrip_floor", "delta_raw_norm"]


def bound_constant(n_fft: int) -> float:
    """sqrt(3 / N)"""
    if n_fft < 1:
        raise ValueError(f"window length must be >= 1, got {n_fft}")
    return math.sqrt(3.0 / n_fft)


def alpha_prime(alpha: float, n_fft: int) -> float:
    """Time-domain budget implied by a time-frequency budget alpha"""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return bound_constant(n_fft) * alpha


@dataclass(frozen=True)
class BoundCheck:
    """
    One evaluation of ||delta|| <= sqrt(3/N) ||beta||

    delta_norm is measured against the round-tripped clean signal;
    delta_raw_norm against the raw input. roundtrip_floor is the clean
    reconstruction error, which stands in for the bound when beta = 0.
    """
    delta_norm: float
    beta_norm: float
    rhs: float
    holds: bool
    slack_ratio: float
    roundtrip_floor: float
    delta_raw_norm: float
    alpha: float = float("nan")


@dataclass(frozen=True)
class VectorSumCheck:
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class _CleanReference:
    samples: np.ndarray
    rebuilt: np.ndarray
    magnitude: MagnitudeMatrix
    phase: PhaseMatrix
    sample_rate: int
    config: StftConfig


def _reference(original: SignalBuffer, stft_config: StftConfig) -> _CleanReference:
    matrix = stft(original, stft_config)
    magnitude, phase = split(matrix)
    rebuilt = pad_to(istft(matrix, stft_config).samples, len(original))
    return _CleanReference(original.samples, rebuilt, magnitude, phase,
                           original.sample_rate, stft_config)


def _check(ref: _CleanReference, perturbed: MagnitudeMatrix, alpha: float = float("nan")) -> BoundCheck:
    if perturbed.shape != ref.magnitude.shape:
        raise DimensionError(
            f"perturbed magnitude {perturbed.shape} does not match the signal's {ref.magnitude.shape}")
    beta_norm = float(np.linalg.norm(perturbed.entries - ref.magnitude.entries))
    adversarial = istft(recombine(perturbed, ref.phase, ref.sample_rate), ref.config)
    x1 = pad_to(adversarial.samples, ref.samples.size)

    delta_norm = float(np.linalg.norm(x1 - ref.rebuilt))
    delta_raw = float(np.linalg.norm(x1 - ref.samples))
    floor = float(np.linalg.norm(ref.rebuilt - ref.samples))
    rhs = bound_constant(ref.config.win_len) * beta_norm

    if rhs > 0:
        slack = delta_norm / rhs
    else:
        slack = 0.0 if delta_norm == 0 else math.inf
    holds = delta_norm <= max(rhs, floor) + HOLD_TOLERANCE
    return BoundCheck(delta_norm, beta_norm, rhs, holds, slack, floor, delta_raw, alpha)


def verify_bound(original: SignalBuffer, perturbed_mag: MagnitudeMatrix,
                 stft_config: StftConfig) -> BoundCheck:
    """
    Reconstruct x1 from the perturbed magnitude with the clean phase and test the bound

    Args:
        original: Clean signal x
        perturbed_mag: |Y| + beta
        stft_config: Analysis parameters

    Returns:
        BoundCheck
    """
    return _check(_reference(original, stft_config), perturbed_mag)


def vector_sum_inequality_check(magnitudes: Sequence[float], angles: Sequence[float]) -> VectorSumCheck:
    """
    |sum a_i e^{j theta_i}|^2 <= 3 sum a_i^2

    Fails for n >= 4 aligned vectors: the cross terms reach (n - 1) sum a_i^2.
    """
    a = np.asarray(magnitudes, dtype=np.float64)
    theta = np.asarray(angles, dtype=np.float64)
    if a.shape != theta.shape:
        raise DimensionError(f"{a.size} magnitudes but {theta.size} angles")
    lhs = float(np.abs(np.sum(a * np.exp(1j * theta))) ** 2)
    rhs = float(3.0 * np.sum(a ** 2))
    return VectorSumCheck(lhs, rhs, lhs <= rhs + HOLD_TOLERANCE * max(rhs, 1.0))


def vector_sum_sweep(max_n: int) -> List[Tuple[int, VectorSumCheck]]:
    """Aligned unit vectors, n = 1..max_n"""
    return [(n, vector_sum_inequality_check(np.ones(n), np.zeros(n))) for n in range(1, max_n + 1)]


def random_magnitude_perturbation(magnitude: MagnitudeMatrix, alpha: float,
                                  rng: np.random.Generator) -> np.ndarray:
    """Gaussian, Hermitian-mirrored, scaled to ||beta|| = alpha ||Y|| over the full matrix"""
    noise = mirror_half_spectrum(rng.standard_normal(magnitude.shape))
    norm = np.linalg.norm(noise)
    if alpha == 0 or norm == 0:
        return np.zeros(magnitude.shape)
    return noise * (alpha * magnitude.norm() / norm)


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: int
    violations: int
    slack_min: float
    slack_median: float
    slack_p95: float
    slack_max: float
    slack_mean: float


def _trial(trial: int, ref: _CleanReference, alpha_range: Tuple[float, float],
           seed: int, include_zero: bool) -> BoundCheck:
    if include_zero and trial == 0:
        return _check(ref, ref.magnitude, 0.0)
    rng = np.random.default_rng([seed, trial])
    alpha = float(rng.uniform(*alpha_range))
    beta = random_magnitude_perturbation(ref.magnitude, alpha, rng)
    perturbed = np.maximum(ref.magnitude.entries + beta, 0.0)
    return _check(ref, MagnitudeMatrix(perturbed, ref.config), alpha)


def monte_carlo_bound(signal: SignalBuffer, stft_config: StftConfig, trials: int,
                      alpha_range: Tuple[float, float] = (0.001, 0.1), seed: int = 0,
                      include_zero: bool = True,
                      workers: Optional[int] = 1) -> Tuple[List[BoundCheck], MonteCarloSummary]:
    """
    Random magnitude perturbations of one signal

    Trial t draws alpha uniformly from alpha_range with stream (seed, t);
    trial 0 is the zero perturbation when include_zero is set.

    Returns:
        (per-trial checks, summary over trials with beta > 0)
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    low, high = alpha_range
    if not 0 <= low <= high:
        raise ValueError(f"invalid alpha range {alpha_range}")

    ref = _reference(signal, stft_config)
    run = partial(_trial, ref=ref, alpha_range=(low, high), seed=seed, include_zero=include_zero)
    rows = map_ordered(run, range(trials), workers, desc="verify-theorem")

    slacks = np.array([r.slack_ratio for r in rows if r.beta_norm > 0])
    violations = sum(not r.holds for r in rows)
    if violations:
        logger.warning("Bound violated in %d of %d trials", violations, trials)
    if slacks.size:
        summary = MonteCarloSummary(
            trials, violations, float(slacks.min()), float(np.median(slacks)),
            float(np.quantile(slacks, 0.95)), float(slacks.max()), float(slacks.mean()))
    else:
        nan = float("nan")
        summary = MonteCarloSummary(trials, violations, nan, nan, nan, nan, nan)
    return rows, summary


def write_bound_csv(rows: Sequence[BoundCheck], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(BOUND_COLUMNS)
        for trial, row in enumerate(rows):
            writer.writerow([
                trial, f"{row.alpha:.6g}", f"{row.beta_norm:.9g}", f"{row.delta_norm:.9g}",
                f"{row.rhs:.9g}", f"{row.slack_ratio:.6g}", int(row.holds),
                f"{row.roundtrip_floor:.9g}", f"{row.delta_raw_norm:.9g}",
            ])
    return path
