"""
Dataset-level evaluation and the two experiment tables

The ratio table lists time-domain perturbation ratios per (method, alpha);
the attack table lists mAP / recall / precision for the clean set and for
every random-noise, FGM and PGD budget.
"""

import csv
import logging
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from src.core.constants import (
    AP_CONF_THRESH, IOU_THRESH, N_CLASSES, REFERENCE_ROUNDTRIP_MEAN, RN_ALPHAS, ATTACK_ALPHAS,
)
from src.core.parallel import map_ordered
from src.data.dataset import DatasetManifest
from src.data.signal_io import SignalBuffer
from src.dsp.spectrogram import DbMapping
from src.dsp.stft import StftConfig, stft, split
from src.attack.attacks import AttackConfig, AttackMethod, AttackPerturber
from src.attack.report import AttackReport
from src.evaluation.metrics import MetricsReport, evaluate_detections

logger = logging.getLogger(__name__)


class Detector(Protocol):
    def detect(self, signal: SignalBuffer, stft_config: StftConfig,
               mapping: Optional[DbMapping] = None, conf_thresh: Optional[float] = None) -> list:
        ...


@dataclass(frozen=True)
class ExperimentRow:
    """
    One line of the attack table

    The drops are relative to the clean row: (clean - this) / clean.
    """
    sample_type: str
    metrics: MetricsReport
    map_drop: float = 0.0
    recall_drop: float = 0.0
    precision_drop: float = 0.0


@dataclass(frozen=True)
class RatioRow:
    """Time-domain ratio statistics for one (method, alpha)"""
    method: str
    alpha: float
    time_ratio_mean: float
    time_ratio_max: float
    time_ratio_min: float
    tf_ratio_mean: float
    signal_ratio_mean: float
    snr_db_mean: float


def _clean_mapping(signal: SignalBuffer, stft_config: StftConfig) -> DbMapping:
    magnitude, _ = split(stft(signal, stft_config))
    return DbMapping.from_magnitude(magnitude)


def _evaluate_entry(index: int, manifest: DatasetManifest, detector: Detector,
                    stft_config: StftConfig, perturber: Optional[AttackPerturber]):
    signal, labels = manifest.load(index)
    mapping = _clean_mapping(signal, stft_config)
    report = None
    if perturber is not None:
        adv = perturber(signal, index, mapping)
        signal, report = adv.signal, adv.report
    scored = detector.detect(signal, stft_config, mapping, AP_CONF_THRESH)
    thresholded = detector.detect(signal, stft_config, mapping, None)
    return scored, thresholded, labels, report


def evaluate_dataset(detector: Detector, manifest: DatasetManifest, stft_config: StftConfig,
                     perturber: Optional[AttackPerturber] = None, n_classes: Optional[int] = None,
                     iou_thresh: float = IOU_THRESH,
                     workers: Optional[int] = 1) -> Tuple[MetricsReport, List[AttackReport]]:
    """
    Detect on every (optionally perturbed) manifest signal and aggregate

    Perturbed signals are mapped to pixels with their clean signal's dB range.

    Args:
        detector: Anything with detect(signal, stft_config, mapping, conf_thresh)
        manifest: Dataset
        stft_config: Analysis parameters
        perturber: Attack or noise source applied before detection
        n_classes: Defaults to the detector's config, else N_CLASSES
        iou_thresh: Match IoU
        workers: Process count

    Returns:
        (metrics, attack reports in manifest order; empty without a perturber)
    """
    if n_classes is None:
        n_classes = getattr(getattr(detector, "config", None), "n_classes", N_CLASSES)
    run = partial(_evaluate_entry, manifest=manifest, detector=detector,
                  stft_config=stft_config, perturber=perturber)
    desc = f"eval {perturber.label}" if perturber is not None else "eval clean"
    results = map_ordered(run, range(len(manifest)), workers, desc=desc)

    scored = [r[0] for r in results]
    thresholded = [r[1] for r in results]
    truths = [r[2] for r in results]
    reports = [r[3] for r in results if r[3] is not None]
    metrics = evaluate_detections(scored, truths, n_classes, iou_thresh, thresholded=thresholded)
    return metrics, reports


def _relative_drop(clean: float, value: float) -> float:
    return (clean - value) / clean if clean > 0 else 0.0


def attack_experiment(manifest: DatasetManifest, model, stft_config: StftConfig,
                      rn_alphas: Sequence[float] = RN_ALPHAS,
                      attack_alphas: Sequence[float] = ATTACK_ALPHAS,
                      base: Optional[AttackConfig] = None,
                      iou_thresh: float = IOU_THRESH,
                      workers: Optional[int] = 1) -> List[ExperimentRow]:
    """
    Rows Sample, RN_a..., FGM_a..., PGD_a... in that order

    Args:
        manifest: Evaluation dataset
        model: Trained detector
        stft_config: Analysis parameters
        rn_alphas: Random-noise budgets
        attack_alphas: Budgets for both FGM and PGD
        base: Attack hyperparameters other than method and alpha
        iou_thresh: Match IoU for every row
        workers: Process count

    Returns:
        ExperimentRow list
    """
    base = base or AttackConfig()
    clean, _ = evaluate_dataset(model, manifest, stft_config, iou_thresh=iou_thresh,
                                workers=workers)
    rows = [ExperimentRow("Sample", clean)]
    logger.info("Sample: mAP %.3f recall %.3f precision %.3f", clean.map, clean.recall, clean.precision)

    plan = [(AttackMethod.RANDOM_NOISE, a) for a in rn_alphas]
    plan += [(AttackMethod.FGM, a) for a in attack_alphas]
    plan += [(AttackMethod.PGD, a) for a in attack_alphas]
    for method, alpha in plan:
        config = replace(base, method=method, alpha=alpha)
        perturber = AttackPerturber(model, stft_config, config)
        metrics, _ = evaluate_dataset(model, manifest, stft_config, perturber,
                                      iou_thresh=iou_thresh, workers=workers)
        rows.append(ExperimentRow(
            perturber.label, metrics,
            _relative_drop(clean.map, metrics.map),
            _relative_drop(clean.recall, metrics.recall),
            _relative_drop(clean.precision, metrics.precision),
        ))
        logger.info("%s: mAP %.3f recall %.3f precision %.3f",
                    perturber.label, metrics.map, metrics.recall, metrics.precision)
    return rows


def _attack_reports(index: int, manifest: DatasetManifest, perturber: AttackPerturber) -> AttackReport:
    signal, _ = manifest.load(index)
    return perturber(signal, index).report


def _ratio_row(method: str, alpha: float, reports: Sequence[AttackReport]) -> RatioRow:
    if not reports:
        nan = float("nan")
        return RatioRow(method, alpha, nan, nan, nan, nan, nan, nan)
    time = np.array([r.time_ratio for r in reports])
    finite_snr = [r.snr_db for r in reports if np.isfinite(r.snr_db)]
    return RatioRow(
        method, alpha,
        float(time.mean()), float(time.max()), float(time.min()),
        float(np.mean([r.tf_ratio for r in reports])),
        float(np.mean([r.signal_ratio for r in reports])),
        float(np.mean(finite_snr)) if finite_snr else float("inf"),
    )


def ratio_experiment(manifest: DatasetManifest, model, stft_config: StftConfig,
                     methods: Sequence = ("fgm", "pgd"), alphas: Sequence[float] = ATTACK_ALPHAS,
                     base: Optional[AttackConfig] = None,
                     workers: Optional[int] = 1) -> List[RatioRow]:
    """
    Mean / max / min time_ratio per (method, alpha) plus the unperturbed None row

    The None row is a zero-budget run, so its time ratio is the pure
    round-trip error over ||Y||.
    """
    base = base or AttackConfig()
    plan = [("None", AttackConfig(AttackMethod.RANDOM_NOISE, 0.0, norm_scope=base.norm_scope))]
    for name in methods:
        method = AttackMethod.from_name(name)
        for alpha in alphas:
            plan.append((method.label, replace(base, method=method, alpha=alpha)))

    rows = []
    for label, config in plan:
        perturber = AttackPerturber(model, stft_config, config)
        run = partial(_attack_reports, manifest=manifest, perturber=perturber)
        reports = map_ordered(run, range(len(manifest)), workers, desc=f"ratios {label}")
        row = _ratio_row(label, config.alpha, reports)
        rows.append(row)
        logger.info("%s %g: time ratio mean %.4f%% (reference None row %.3f%%)",
                    label, config.alpha, 100 * row.time_ratio_mean, 100 * REFERENCE_ROUNDTRIP_MEAN)
    return rows


def write_ratio_table(rows: Sequence[RatioRow], path: Union[str, Path]) -> Path:
    """Columns: method, alpha, mean/max/min time ratio (%), mean tf ratio, signal ratio, SNR"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "alpha", "time_ratio_mean_pct", "time_ratio_max_pct",
                         "time_ratio_min_pct", "tf_ratio_mean", "signal_ratio_mean", "snr_db_mean"])
        for row in rows:
            writer.writerow([
                row.method, f"{row.alpha:g}",
                f"{100 * row.time_ratio_mean:.3f}", f"{100 * row.time_ratio_max:.3f}",
                f"{100 * row.time_ratio_min:.3f}", f"{row.tf_ratio_mean:.6f}",
                f"{row.signal_ratio_mean:.6f}", f"{row.snr_db_mean:.3f}",
            ])
    return path


def write_experiment_rows(rows: Sequence[ExperimentRow], path: Union[str, Path],
                          conf_thresh: Optional[float] = None,
                          iou_thresh: float = IOU_THRESH) -> Path:
    """Columns: sample_type, mAP, recall, precision, and relative drops"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        if conf_thresh is not None:
            handle.write(f"# precision/recall at fixed confidence {conf_thresh:g}; mAP at IoU {iou_thresh:g}\n")
        writer = csv.writer(handle)
        writer.writerow(["sample_type", "mAP", "recall", "precision",
                         "map_drop", "recall_drop", "precision_drop"])
        for row in rows:
            writer.writerow([
                row.sample_type, f"{row.metrics.map:.3f}", f"{row.metrics.recall:.3f}",
                f"{row.metrics.precision:.3f}", f"{row.map_drop:.3f}",
                f"{row.recall_drop:.3f}", f"{row.precision_drop:.3f}",
            ])
    return path
