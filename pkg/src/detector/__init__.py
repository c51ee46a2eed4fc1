"""
Grid-based single-stage detector implemented directly on numpy arrays
"""

from src.detector.decode import RawGrid, DetectionBox, decode, nms, box_iou
from src.detector.losses import LossResult, training_loss, attack_loss
from src.detector.model import (
    DetectorConfig, DetectorModel, init_model, forward, save_model, load_model,
)
from src.detector.pipeline import detect_signal, backward_to_input, magnitude_gradient

__all__ = [
    'RawGrid', 'DetectionBox', 'decode', 'nms', 'box_iou',
    'LossResult', 'training_loss', 'attack_loss',
    'DetectorConfig', 'DetectorModel', 'init_model', 'forward', 'save_model', 'load_model',
    'detect_signal', 'backward_to_input', 'magnitude_gradient',
]
