"""
Signal -> spectrogram -> detector composition and its gradient chain
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.data.signal_io import SignalBuffer
from src.dsp.stft import StftConfig, MagnitudeMatrix, stft, split
from src.dsp.spectrogram import DbMapping, SpectrogramImage, to_grayscale, grayscale_grad
from src.detector.decode import RawGrid, DetectionBox, decode
from src.detector.losses import LossResult
from src.detector.model import DetectorModel, forward, forward_batch, backward_batch

logger = logging.getLogger(__name__)

LossFn = Callable[[RawGrid], LossResult]


def signal_image(signal: SignalBuffer, stft_config: StftConfig,
                 mapping: Optional[DbMapping] = None) -> SpectrogramImage:
    """to_grayscale(split(stft(signal))[0]); the mapping defaults to the signal's own"""
    magnitude, _ = split(stft(signal, stft_config))
    if mapping is None:
        mapping = DbMapping.from_magnitude(magnitude)
    return to_grayscale(magnitude, mapping)


def detect_magnitude(model: DetectorModel, magnitude: MagnitudeMatrix, mapping: DbMapping,
                     conf_thresh: Optional[float] = None) -> List[DetectionBox]:
    conf = model.config.conf_thresh if conf_thresh is None else conf_thresh
    return decode(forward(model, to_grayscale(magnitude, mapping)), conf, model.config.nms_iou)


def detect_signal(model: DetectorModel, signal: SignalBuffer, stft_config: StftConfig,
                  mapping: Optional[DbMapping] = None,
                  conf_thresh: Optional[float] = None) -> List[DetectionBox]:
    """
    Full detection pipeline f2(f1(x))

    Args:
        model: Detector
        signal: Time-domain input
        stft_config: Analysis parameters
        mapping: Frozen dB mapping; derived from the signal when None
        conf_thresh: Overrides the model's objectness cut

    Returns:
        Decoded detections
    """
    conf = model.config.conf_thresh if conf_thresh is None else conf_thresh
    image = signal_image(signal, stft_config, mapping)
    return decode(forward(model, image), conf, model.config.nms_iou)


def backward_to_input(model: DetectorModel, image, loss_fn: LossFn) -> Tuple[LossResult, np.ndarray]:
    """
    Gradient of a scalar detector loss w.r.t. every input pixel

    Args:
        model: Detector
        image: SpectrogramImage or H x W array
        loss_fn: Maps the RawGrid to a LossResult

    Returns:
        (loss, H x W pixel gradient)
    """
    raw, cache = forward_batch(model, image)
    loss = loss_fn(RawGrid(raw[0]))
    grad_pixels, _ = backward_batch(model, cache, loss.grad[None])
    return loss, grad_pixels[0]


def magnitude_gradient(model: DetectorModel, magnitude: MagnitudeMatrix, mapping: DbMapping,
                       loss_fn: LossFn) -> Tuple[LossResult, np.ndarray]:
    """
    Chain the detector gradient through the grayscale mapping onto |Y|

    Returns:
        (loss, K x M gradient with the negative-frequency half mirrored)
    """
    image = to_grayscale(magnitude, mapping)
    loss, grad_pixels = backward_to_input(model, image, loss_fn)
    return loss, grayscale_grad(magnitude, mapping, grad_pixels)
