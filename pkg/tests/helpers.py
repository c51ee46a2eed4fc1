"""
Small configurations shared by the test modules

A 64-point STFT with hop 62 turns a 1986-sample signal into a 32 x 32
spectrogram, which a three-block detector reduces to a 4 x 4 grid.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.generator import GenConfig, generate_burst_signal
from src.data.signal_io import SignalBuffer
from src.dsp.stft import StftConfig
from src.detector.decode import DetectionBox
from src.detector.model import DetectorConfig, init_model

TINY_STFT = StftConfig(n_fft=64, overlap=2)
TINY_FRAMES = 32
TINY_LENGTH = TINY_STFT.signal_length(TINY_FRAMES)


def tiny_gen_config(seed: int = 0, **overrides) -> GenConfig:
    params = dict(
        signal_length=TINY_LENGTH,
        duration_range=(0.0005, 0.0015),
        amplitude_range=(0.2, 0.4),
        seed=seed,
    )
    params.update(overrides)
    return GenConfig(**params)


def tiny_signal(seed: int = 0, **overrides):
    """(SignalBuffer, labels) from the tiny generator"""
    return generate_burst_signal(tiny_gen_config(seed, **overrides))


def tiny_detector_config(**overrides) -> DetectorConfig:
    params = dict(input_h=32, input_w=32, grid_s=4, n_classes=3, channels=(4, 8, 8))
    params.update(overrides)
    return DetectorConfig(**params)


def tiny_model(seed: int = 0, objectness_bias=None, head_scale: float = 1.0, **overrides):
    """
    Freshly initialized tiny detector

    objectness_bias replaces the head's objectness bias; head_scale multiplies
    the head weights (larger values give stronger input gradients).
    """
    model = init_model(tiny_detector_config(**overrides), seed)
    params = [np.array(p) for p in model.params]
    params[-2] = params[-2] * head_scale
    if objectness_bias is not None:
        params[-1][0] = objectness_bias
    return model.with_params(params)


def tone_signal(freq_hz: float = 100_000.0, length: int = TINY_LENGTH,
                sample_rate: int = 800_000, amplitude: float = 0.5) -> SignalBuffer:
    t = np.arange(length) / sample_rate
    return SignalBuffer(amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate)


class EchoDetector:
    """Detector that returns the ground truth of each known signal with confidence 1"""

    def __init__(self, n_classes: int = 3):
        self.n_classes = n_classes
        self.truth = {}

    def remember(self, signal: SignalBuffer, labels):
        self.truth[signal.samples.tobytes()] = list(labels)

    def detect(self, signal, stft_config, mapping=None, conf_thresh=None):
        labels = self.truth.get(signal.samples.tobytes(), [])
        return [DetectionBox(l.class_id, l.cx, l.cy, l.w, l.h, 1.0) for l in labels]
