"""
Magnitude-domain vanishing attacks: FGM, PGD and a random-noise baseline

All three perturb |Y| only, keep the clean phase, and reconstruct the
adversarial signal with the weighted overlap-add inverse. Perturbations stay
mirrored across the negative-frequency half so the inverse is real.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import partial
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import yaml

from src.core.constants import (
    ATTACK_LAMBDA, ATTACK_N_ITER, ATTACK_DECAY, ATTACK_STEP_FRACTION,
    ATTACK_CLIP_MEDIANS, MAX_DECAY_STEPS,
)
from src.core.errors import AttackError, ConfigError, ZeroGradientError
from src.core.parallel import map_ordered
from src.data.dataset import DatasetManifest
from src.data.signal_io import SignalBuffer, read_signal_file, write_signal_file
from src.dsp.stft import (
    StftConfig, MagnitudeMatrix, PhaseMatrix, stft, istft, split, recombine,
    mirror_half_spectrum, pad_to,
)
from src.dsp.spectrogram import DbMapping
from src.detector.losses import attack_loss
from src.detector.model import DetectorModel
from src.detector.pipeline import detect_magnitude, detect_signal, magnitude_gradient
from src.attack.report import (
    AdversarialExample, AttackReport, Termination, NORM_SCOPES, realized_ratios, tf_norm,
    write_report_csv,
)
from src.theory.bounds import bound_constant

logger = logging.getLogger(__name__)


class AttackMethod(Enum):
    FGM = "fgm"
    PGD = "pgd"
    RANDOM_NOISE = "rn"

    @classmethod
    def from_name(cls, name: Union[str, "AttackMethod"]) -> "AttackMethod":
        if isinstance(name, cls):
            return name
        aliases = {"fgm": cls.FGM, "pgd": cls.PGD, "rn": cls.RANDOM_NOISE,
                   "random": cls.RANDOM_NOISE, "random-noise": cls.RANDOM_NOISE}
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ConfigError("attack.method", f"unknown method '{name}'") from None

    @property
    def label(self) -> str:
        """Row-label prefix: FGM, PGD, RN"""
        return self.name if self != AttackMethod.RANDOM_NOISE else "RN"


@dataclass(frozen=True)
class AttackConfig:
    """
    Attack hyperparameters

    step_eps and clip_eps default (None) to 0.2 * alpha * ||Y|| and
    10 * median |Y| of the attacked signal.
    """
    method: AttackMethod = AttackMethod.PGD
    alpha: float = 0.02
    n_iter: int = ATTACK_N_ITER
    step_eps: Optional[float] = None
    clip_eps: Optional[float] = None
    decay: float = ATTACK_DECAY
    lam: float = ATTACK_LAMBDA
    max_decay_steps: int = MAX_DECAY_STEPS
    norm_scope: str = "full"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", AttackMethod.from_name(self.method))
        if not self.alpha >= 0 or not math.isfinite(self.alpha):
            raise ConfigError("attack.alpha", f"must be a finite value >= 0, got {self.alpha}")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError("attack.decay", "must lie in (0, 1)")
        if self.n_iter < 1:
            raise ConfigError("attack.n_iter", "must be >= 1")
        if self.max_decay_steps < 0:
            raise ConfigError("attack.max_decay_steps", "must be >= 0")
        for key in ("step_eps", "clip_eps"):
            value = getattr(self, key)
            if value is not None and value <= 0:
                raise ConfigError(f"attack.{key}", "must be positive")
        if self.norm_scope not in NORM_SCOPES:
            raise ConfigError("attack.norm_scope", f"must be one of {NORM_SCOPES}")


def clip2(step: np.ndarray, clip_eps: float) -> np.ndarray:
    """Element-wise clamp to [-clip_eps, clip_eps]"""
    if not clip_eps > 0:
        raise ValueError(f"clip_eps must be positive, got {clip_eps}")
    return np.clip(step, -clip_eps, clip_eps)


@dataclass(frozen=True)
class _CleanState:
    signal: SignalBuffer
    config: StftConfig
    magnitude: MagnitudeMatrix
    phase: PhaseMatrix
    mapping: DbMapping
    y_norm: float


def _clean_state(signal: SignalBuffer, stft_config: StftConfig,
                 mapping: Optional[DbMapping], scope: str) -> _CleanState:
    magnitude, phase = split(stft(signal, stft_config))
    if mapping is None:
        mapping = DbMapping.from_magnitude(magnitude)
    return _CleanState(signal, stft_config, magnitude, phase, mapping,
                       tf_norm(magnitude.entries, scope))


def _finish(state: _CleanState, perturbed: np.ndarray, config: AttackConfig,
            model: Optional[DetectorModel], iterations: int, loss_trace: List[float],
            detections_before: int) -> AdversarialExample:
    """Clamp, reconstruct with the clean phase, and fill the report"""
    clamp_count = int(np.count_nonzero(perturbed < 0))
    adv_mag = MagnitudeMatrix(np.maximum(perturbed, 0.0), state.config)
    matrix = recombine(adv_mag, state.phase, state.signal.sample_rate)
    rebuilt, residue = istft(matrix, state.config, return_residue=True)
    x_adv = state.signal.with_samples(pad_to(rebuilt.samples, len(state.signal)))

    beta = adv_mag.entries - state.magnitude.entries
    beta_norm = tf_norm(beta, config.norm_scope)
    delta_norm = float(np.linalg.norm(x_adv.samples - state.signal.samples))
    x_norm = state.signal.norm()
    tf_ratio = beta_norm / state.y_norm if state.y_norm > 0 else 0.0
    time_ratio = delta_norm / state.y_norm if state.y_norm > 0 else 0.0

    if model is not None:
        after = len(detect_signal(model, x_adv, state.config, state.mapping))
        vanished_in_tf = not detect_magnitude(model, adv_mag, state.mapping)
    else:
        after, vanished_in_tf = 0, False
    terminated = Termination.VANISHED if vanished_in_tf else Termination.MAX_ITER

    report = AttackReport(
        method=config.method.value,
        alpha=config.alpha,
        iterations_used=iterations,
        tf_ratio=tf_ratio,
        time_ratio=time_ratio,
        bound_rhs=bound_constant(state.config.win_len) * float(np.linalg.norm(beta)),
        detections_before=detections_before,
        detections_after=after,
        terminated_by=terminated,
        signal_ratio=delta_norm / x_norm if x_norm > 0 else 0.0,
        snr_db=20.0 * math.log10(x_norm / delta_norm) if delta_norm > 0 and x_norm > 0 else math.inf,
        clamp_count=clamp_count,
        imag_residue=residue,
        loss_trace=tuple(loss_trace),
    )
    if tf_ratio > config.alpha + 1e-6:
        logger.warning("tf ratio %.6g exceeds alpha %.6g", tf_ratio, config.alpha)
    return AdversarialExample(x_adv, adv_mag, report)


def _vanishing_loss(lam: float):
    return partial(attack_loss, target_set=None, lam=lam)


def fgm_attack(model: DetectorModel, signal: SignalBuffer, stft_config: StftConfig,
               mapping: Optional[DbMapping], config: AttackConfig) -> AdversarialExample:
    """
    Single normalized step down the vanishing loss

    beta = alpha ||Y|| g / ||g||, applied to |Y| and clamped at 0.

    Raises:
        ZeroGradientError: alpha > 0 and the gradient vanishes
    """
    state = _clean_state(signal, stft_config, mapping, config.norm_scope)
    y = state.magnitude.entries
    before = len(detect_magnitude(model, state.magnitude, state.mapping))
    if config.alpha == 0:
        return _finish(state, np.array(y), config, model, 0, [], before)

    loss, grad = magnitude_gradient(model, state.magnitude, state.mapping, _vanishing_loss(config.lam))
    if not math.isfinite(loss.value):
        raise AttackError(f"non-finite attack loss {loss.value}")
    grad_norm = tf_norm(grad, config.norm_scope)
    if grad_norm == 0:
        raise ZeroGradientError("attack loss gradient is zero; FGM has no direction")
    beta = config.alpha * state.y_norm * grad / grad_norm
    return _finish(state, y - beta, config, model, 1, [loss.value], before)


def _project(candidate: np.ndarray, y: np.ndarray, radius: float, scope: str) -> np.ndarray:
    """Pull candidate back onto the L2 ball of the given radius around y"""
    diff = candidate - y
    norm = tf_norm(diff, scope)
    if norm <= radius or norm == 0:
        return candidate
    return y + diff * (radius / norm)


def pgd_attack(model: DetectorModel, signal: SignalBuffer, stft_config: StftConfig,
               mapping: Optional[DbMapping], config: AttackConfig) -> AdversarialExample:
    """
    Iterated normalized descent on the vanishing loss under an L2 ratio budget

    Each iteration: stop if nothing is detected; g = dL/d|Y|; beta = eps g/||g||;
    clip each entry to clip_eps; shrink beta by the decay factor while the
    accumulated change exceeds alpha ||Y|| (at most max_decay_steps times, then
    project onto the ball); y_n = max(y_{n-1} - beta, 0).

    A zero gradient stops the run with the current magnitude and MAX_ITER.

    Raises:
        AttackError: Non-finite loss
    """
    state = _clean_state(signal, stft_config, mapping, config.norm_scope)
    y = state.magnitude.entries
    radius = config.alpha * state.y_norm
    step_eps = config.step_eps or ATTACK_STEP_FRACTION * max(config.alpha, 0.0) * state.y_norm
    median = float(np.median(y))
    clip_eps = config.clip_eps or (ATTACK_CLIP_MEDIANS * median if median > 0 else float(np.max(y)) or 1.0)
    loss_fn = _vanishing_loss(config.lam)

    current = np.array(y)
    before = len(detect_magnitude(model, state.magnitude, state.mapping))
    trace: List[float] = []
    iterations = 0

    if step_eps > 0:
        while iterations < config.n_iter:
            magnitude = MagnitudeMatrix(current, stft_config)
            detected = before if iterations == 0 else len(detect_magnitude(model, magnitude, state.mapping))
            if not detected:
                break
            loss, grad = magnitude_gradient(model, magnitude, state.mapping, loss_fn)
            if not math.isfinite(loss.value):
                raise AttackError(f"non-finite attack loss at iteration {iterations}")
            trace.append(loss.value)
            grad_norm = tf_norm(grad, config.norm_scope)
            if grad_norm == 0:
                logger.warning("Zero attack gradient at iteration %d; stopping", iterations)
                break

            beta = clip2(step_eps * grad / grad_norm, clip_eps)
            candidate = np.maximum(current - beta, 0.0)
            decays = 0
            while tf_norm(candidate - y, config.norm_scope) > radius and decays < config.max_decay_steps:
                beta = config.decay * beta
                candidate = np.maximum(current - beta, 0.0)
                decays += 1
            candidate = _project(candidate, y, radius, config.norm_scope)
            logger.debug("PGD iter %d loss %.5f decays %d", iterations, loss.value, decays)
            current = candidate
            iterations += 1

    return _finish(state, current, config, model, iterations, trace, before)


def random_noise_baseline(signal: SignalBuffer, stft_config: StftConfig, alpha: float,
                          seed: int = 0, scope: str = "full",
                          model: Optional[DetectorModel] = None,
                          mapping: Optional[DbMapping] = None) -> AdversarialExample:
    """
    Gaussian magnitude noise with ||beta|| = alpha ||Y||

    The model, when given, only fills the detection counts of the report.
    """
    config = AttackConfig(AttackMethod.RANDOM_NOISE, alpha, norm_scope=scope, seed=seed)
    state = _clean_state(signal, stft_config, mapping, scope)
    y = state.magnitude.entries
    noise = mirror_half_spectrum(np.random.default_rng(seed).standard_normal(y.shape))
    noise_norm = tf_norm(noise, scope)
    beta = noise * (alpha * state.y_norm / noise_norm) if alpha > 0 and noise_norm > 0 else np.zeros(y.shape)
    before = len(detect_magnitude(model, state.magnitude, state.mapping)) if model is not None else 0
    return _finish(state, y + beta, config, model, 1 if alpha > 0 else 0, [], before)


def run_attack(model: Optional[DetectorModel], signal: SignalBuffer, stft_config: StftConfig,
               mapping: Optional[DbMapping], config: AttackConfig) -> AdversarialExample:
    """Dispatch on config.method"""
    if config.method == AttackMethod.RANDOM_NOISE:
        return random_noise_baseline(signal, stft_config, config.alpha, config.seed,
                                     config.norm_scope, model, mapping)
    if model is None:
        raise AttackError(f"{config.method.value} needs a detector model")
    if config.method == AttackMethod.FGM:
        return fgm_attack(model, signal, stft_config, mapping, config)
    return pgd_attack(model, signal, stft_config, mapping, config)


@dataclass(frozen=True)
class AttackPerturber:
    """
    Picklable signal -> adversarial example callable for the experiment harness

    File index offsets the random-noise seed so every file gets its own stream.
    """
    model: Optional[DetectorModel]
    stft_config: StftConfig
    config: AttackConfig

    @property
    def label(self) -> str:
        return f"{self.config.method.label}_{self.config.alpha:g}"

    def __call__(self, signal: SignalBuffer, index: int = 0,
                 mapping: Optional[DbMapping] = None) -> AdversarialExample:
        config = replace(self.config, seed=self.config.seed + index)
        return run_attack(self.model, signal, self.stft_config, mapping, config)


def _attack_entry(index: int, manifest: DatasetManifest, perturber: AttackPerturber,
                  out_dir: Path) -> Tuple[str, AttackReport]:
    signal, _ = manifest.load(index)
    adv = perturber(signal, index)
    name = Path(manifest.entries[index].signal).name
    path = out_dir / "signals" / name
    clamped = write_signal_file(adv.signal, path)
    written = read_signal_file(path, signal.sample_rate)
    tf_ratio, time_ratio = realized_ratios(signal, written, perturber.stft_config,
                                           perturber.config.norm_scope)
    return name, replace(adv.report, write_clamp_count=clamped,
                         written_tf_ratio=tf_ratio, written_time_ratio=time_ratio)


def write_adversarial_set(manifest: DatasetManifest, perturber: AttackPerturber,
                          out_dir: Union[str, Path],
                          workers: Optional[int] = 1) -> List[Tuple[str, AttackReport]]:
    """
    Attack every manifest file, writing i16 signals, attack_report.csv and attack_manifest.yaml

    Returns:
        (file name, report) per manifest entry, in manifest order
    """
    out_dir = Path(out_dir)
    (out_dir / "signals").mkdir(parents=True, exist_ok=True)
    run = partial(_attack_entry, manifest=manifest, perturber=perturber, out_dir=out_dir)
    rows = map_ordered(run, range(len(manifest)), workers, desc=f"attack {perturber.label}")

    write_report_csv(rows, out_dir / "attack_report.csv")
    echo = {
        "dataset": str(manifest.root),
        "method": perturber.config.method.value,
        "alpha": perturber.config.alpha,
        "n_iter": perturber.config.n_iter,
        "step_eps": perturber.config.step_eps,
        "clip_eps": perturber.config.clip_eps,
        "decay": perturber.config.decay,
        "lambda": perturber.config.lam,
        "norm_scope": perturber.config.norm_scope,
        "seed": perturber.config.seed,
        "stft": {"n_fft": perturber.stft_config.n_fft, "overlap": perturber.stft_config.overlap},
        "files": [name for name, _ in rows],
    }
    with open(out_dir / "attack_manifest.yaml", "w", encoding="utf-8") as handle:
        yaml.safe_dump(echo, handle, sort_keys=False)
    violations = sum(r.tf_ratio > r.alpha + 1e-6 for _, r in rows)
    clamped = sum(r.write_clamp_count > 0 for _, r in rows)
    logger.info("Attacked %d files with %s (%d budget violations)", len(rows), perturber.label, violations)
    if clamped:
        logger.warning("%d of %d adversarial signals exceeded full scale and were clamped on write; "
                       "see written_tf_ratio / written_time_ratio", clamped, len(rows))
    return rows
