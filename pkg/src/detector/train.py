"""
Mini-batch SGD training for the grid detector
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.core.constants import AP_CONF_THRESH, IOU_THRESH, JITTER_STD, TRAIN_EPOCHS
from src.core.errors import ConfigError, TrainingDivergedError
from src.core.parallel import map_ordered
from src.data.generator import GenConfig, generate_burst_signal
from src.data.signal_io import SignalBuffer
from src.dsp.stft import StftConfig
from src.detector.decode import RawGrid, decode
from src.detector.losses import training_loss
from src.detector.model import DetectorModel, forward_batch, backward_batch
from src.detector.pipeline import signal_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = TRAIN_EPOCHS
    batch_size: int = 8
    lr: float = 0.01
    min_lr_ratio: float = 0.01
    warmup_epochs: int = 1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    grad_clip: float = 10.0
    val_fraction: float = 0.1
    jitter_std: float = JITTER_STD
    synthetic_per_epoch: int = 0
    keep_best: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("train.epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        if self.lr <= 0:
            raise ConfigError("train.lr", "must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("train.momentum", "must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("train.val_fraction", "must lie in [0, 1)")
        for key in ("weight_decay", "grad_clip", "jitter_std", "min_lr_ratio", "warmup_epochs",
                    "synthetic_per_epoch"):
            if getattr(self, key) < 0:
                raise ConfigError(f"train.{key}", "must be non-negative")


@dataclass(frozen=True)
class TrainingSample:
    """Detector input pixels and labels for one signal"""
    pixels: np.ndarray
    labels: Tuple


@dataclass
class TrainingHistory:
    epoch_loss: List[float] = field(default_factory=list)
    learning_rate: List[float] = field(default_factory=list)
    val_map: List[float] = field(default_factory=list)
    val_recall: List[float] = field(default_factory=list)
    val_precision: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One row per epoch; validation columns are blank without a validation split"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "loss", "lr", "val_map", "val_recall", "val_precision"])
            for epoch, loss in enumerate(self.epoch_loss):
                val = [f"{series[epoch]:.6f}" if epoch < len(series) else ""
                       for series in (self.val_map, self.val_recall, self.val_precision)]
                writer.writerow([epoch + 1, f"{loss:.6f}", f"{self.learning_rate[epoch]:.6g}", *val])
        return path


def learning_rate(step: int, total_steps: int, warmup_steps: int,
                  base_lr: float, min_lr_ratio: float) -> float:
    """Linear warm-up followed by cosine decay to base_lr * min_lr_ratio"""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min((step - warmup_steps) / span, 1.0)
    floor = base_lr * min_lr_ratio
    return floor + (base_lr - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


def _prepare_one(item, stft_config: StftConfig) -> TrainingSample:
    signal, labels = item
    image = signal_image(signal, stft_config)
    return TrainingSample(np.array(image.pixels), tuple(labels))


def prepare_samples(items: Sequence[Tuple[SignalBuffer, Sequence]], stft_config: StftConfig,
                    workers: Optional[int] = 1) -> List[TrainingSample]:
    """
    Render (signal, labels) pairs into detector inputs

    Each signal is mapped with its own clean dB range.
    """
    return map_ordered(partial(_prepare_one, stft_config=stft_config), items,
                       workers=workers, desc="spectrograms")


def _synthetic_one(seed: int, gen_config: GenConfig, stft_config: StftConfig) -> TrainingSample:
    return _prepare_one(generate_burst_signal(gen_config.with_seed(seed)), stft_config)


@dataclass(frozen=True)
class SyntheticSource:
    """
    Fresh generator draws mixed into every training epoch

    Seeds come from SeedSequence([seed, epoch]), a 32-bit stream that does
    not line up with the master + i seeds of on-disk dataset files.
    """
    gen_config: GenConfig
    stft_config: StftConfig
    count: int
    seed: int = 0
    workers: Optional[int] = 1

    def seeds(self, epoch: int) -> List[int]:
        if self.count <= 0:
            return []
        state = np.random.SeedSequence([self.seed, epoch]).generate_state(self.count)
        return [int(s) for s in state]

    def __call__(self, epoch: int) -> List[TrainingSample]:
        make = partial(_synthetic_one, gen_config=self.gen_config, stft_config=self.stft_config)
        return map_ordered(make, self.seeds(epoch), workers=self.workers,
                           desc=f"epoch {epoch + 1} signals")


def split_validation(samples: Sequence, fraction: float, seed: int) -> Tuple[list, list]:
    """Deterministic shuffle-and-split; keeps at least one training sample"""
    samples = list(samples)
    n_val = int(round(len(samples) * fraction))
    n_val = min(n_val, len(samples) - 1)
    if n_val <= 0:
        return samples, []
    order = np.random.default_rng(seed).permutation(len(samples))
    val = [samples[i] for i in order[:n_val]]
    train = [samples[i] for i in order[n_val:]]
    return train, val


def validate(model: DetectorModel, samples: Sequence[TrainingSample]):
    """mAP at low confidence plus precision/recall at the model's conf_thresh"""
    from src.evaluation.metrics import evaluate_detections

    if not samples:
        return None
    raw, _ = forward_batch(model, np.stack([s.pixels for s in samples]))
    scored, thresholded = [], []
    for grid in raw:
        grid = RawGrid(grid)
        scored.append(decode(grid, AP_CONF_THRESH, model.config.nms_iou))
        thresholded.append(decode(grid, model.config.conf_thresh, model.config.nms_iou))
    truths = [list(s.labels) for s in samples]
    return evaluate_detections(scored, truths, model.config.n_classes, IOU_THRESH,
                               thresholded=thresholded)


def _batch_gradient(model: DetectorModel, batch: Sequence[TrainingSample],
                    rng: np.random.Generator, jitter_std: float) -> Tuple[float, List[np.ndarray]]:
    pixels = np.stack([s.pixels for s in batch])
    if jitter_std > 0:
        pixels = np.clip(pixels + rng.normal(0.0, jitter_std, pixels.shape), 0.0, 1.0)
    raw, cache = forward_batch(model, pixels)
    grad_raw = np.zeros_like(raw)
    total = 0.0
    for index, sample in enumerate(batch):
        result = training_loss(raw[index], sample.labels)
        total += result.value
        grad_raw[index] = result.grad
    scale = 1.0 / len(batch)
    _, grads = backward_batch(model, cache, grad_raw * scale)
    return total * scale, grads


def train(model: DetectorModel, samples: Sequence[TrainingSample], config: TrainConfig,
          val_samples: Optional[Sequence[TrainingSample]] = None,
          progress: bool = True,
          extra_samples: Optional[Callable[[int], Sequence[TrainingSample]]] = None,
          ) -> Tuple[DetectorModel, TrainingHistory]:
    """
    SGD with momentum, weight decay and global-norm gradient clipping

    Deterministic given config.seed. When val_samples is None a validation
    split of config.val_fraction is carved out of samples. With
    config.keep_best the returned weights are those of the epoch with the
    highest validation mAP.

    Args:
        model: Starting weights (left untouched)
        samples: Training inputs
        config: Optimizer settings
        val_samples: Explicit validation set
        progress: Show a per-epoch progress bar
        extra_samples: Called with the epoch index; its samples join that epoch only

    Returns:
        (trained model, history)

    Raises:
        TrainingDivergedError: On a non-finite batch loss
    """
    if not samples:
        raise ValueError("training set is empty")
    if val_samples is None:
        samples, val_samples = split_validation(samples, config.val_fraction, config.seed)
    samples = list(samples)

    rng = np.random.default_rng(config.seed)
    params = [np.array(p, dtype=np.float64, copy=True) for p in model.params]
    velocity = [np.zeros_like(p) for p in params]
    decay_mask = [p.ndim > 1 for p in params]

    n_extra = config.synthetic_per_epoch if extra_samples is not None else 0
    steps_per_epoch = math.ceil((len(samples) + n_extra) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = min(config.warmup_epochs * steps_per_epoch, total_steps // 2)
    history = TrainingHistory()
    best_map, best_params = -1.0, None
    logger.info("Training on %d samples (+%d fresh per epoch, %d validation), %d steps",
                len(samples), n_extra, len(val_samples), total_steps)

    step = 0
    for epoch in tqdm(range(config.epochs), desc="train", disable=not progress, leave=False):
        epoch_samples = samples
        if extra_samples is not None:
            epoch_samples = samples + list(extra_samples(epoch))
        order = rng.permutation(len(epoch_samples))
        losses = []
        lr = config.lr
        for start in range(0, len(epoch_samples), config.batch_size):
            batch = [epoch_samples[i] for i in order[start:start + config.batch_size]]
            current = model.with_params(params)
            loss, grads = _batch_gradient(current, batch, rng, config.jitter_std)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1, step, loss)

            for index, use_decay in enumerate(decay_mask):
                if use_decay:
                    grads[index] = grads[index] + config.weight_decay * params[index]
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if config.grad_clip > 0 and norm > config.grad_clip:
                grads = [g * (config.grad_clip / norm) for g in grads]

            lr = learning_rate(step, total_steps, warmup_steps, config.lr, config.min_lr_ratio)
            for index, grad in enumerate(grads):
                velocity[index] = config.momentum * velocity[index] - lr * grad
                params[index] += velocity[index]
            if not all(np.all(np.isfinite(p)) for p in params):
                raise TrainingDivergedError(epoch + 1, step, loss)
            losses.append(loss)
            logger.debug("epoch %d step %d loss %.5f |g| %.3f", epoch + 1, step, loss, norm)
            step += 1

        history.epoch_loss.append(float(np.mean(losses)))
        history.learning_rate.append(lr)
        message = f"epoch {epoch + 1}/{config.epochs} loss {history.epoch_loss[-1]:.4f}"
        if val_samples:
            report = validate(model.with_params(params), val_samples)
            history.val_map.append(report.map)
            history.val_recall.append(report.recall)
            history.val_precision.append(report.precision)
            message += f" val mAP {report.map:.3f}"
            if report.map > best_map:
                best_map, best_params = report.map, [np.array(p) for p in params]
                history.best_epoch = epoch + 1
        logger.info(message)

    if config.keep_best and best_params is not None:
        logger.info("Keeping epoch %d (val mAP %.3f)", history.best_epoch, best_map)
        params = best_params
    return model.with_params(params), history
