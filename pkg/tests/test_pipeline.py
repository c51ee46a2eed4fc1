"""
Unit tests for the signal -> detection composition and its gradient chain
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.detector.decode import decode
from src.detector.losses import LossResult, attack_loss
from src.detector.model import forward
from src.detector.pipeline import (
    backward_to_input, detect_signal, magnitude_gradient, signal_image,
)
from src.dsp.spectrogram import DbMapping, to_grayscale
from src.dsp.stft import MagnitudeMatrix, split, stft
from tests.helpers import TINY_STFT, tiny_model, tiny_signal


class TestDetectSignal(unittest.TestCase):

    def test_equals_composition(self):
        """detect_signal is decode(forward(to_grayscale(|stft|)))"""
        model = tiny_model(objectness_bias=0.5, head_scale=50.0)
        signal, _ = tiny_signal(seed=1)
        magnitude, _ = split(stft(signal, TINY_STFT))
        mapping = DbMapping.from_magnitude(magnitude)
        expected = decode(forward(model, to_grayscale(magnitude, mapping)), 0.25, 0.45)
        self.assertEqual(detect_signal(model, signal, TINY_STFT, mapping), expected)
        self.assertEqual(detect_signal(model, signal, TINY_STFT), expected)

    def test_model_detect_protocol(self):
        model = tiny_model(objectness_bias=0.5, head_scale=50.0)
        signal, _ = tiny_signal(seed=2)
        self.assertEqual(model.detect(signal, TINY_STFT, conf_thresh=0.1),
                         detect_signal(model, signal, TINY_STFT, conf_thresh=0.1))

    def test_silent_model(self):
        signal, _ = tiny_signal(seed=3)
        self.assertEqual(detect_signal(tiny_model(objectness_bias=-10.0), signal, TINY_STFT), [])


class TestBackwardToInput(unittest.TestCase):

    def setUp(self):
        self.model = tiny_model(seed=2, objectness_bias=0.0, head_scale=100.0)
        signal, _ = tiny_signal(seed=4)
        self.image = signal_image(signal, TINY_STFT)

    def test_zero_upstream(self):
        zero = lambda raw: LossResult(0.0, np.zeros(raw.values.shape))
        _, grad = backward_to_input(self.model, self.image, zero)
        self.assertFalse(grad.any())

    def test_attack_loss_gradient(self):
        """Matches central differences on sampled pixels"""
        loss_fn = lambda raw: attack_loss(raw)
        loss, grad = backward_to_input(self.model, self.image, loss_fn)
        pixels = np.array(self.image.pixels)
        rng = np.random.default_rng(0)
        h = 1e-6
        failures = 0
        for _ in range(40):
            i, j = rng.integers(0, 32, 2)
            plus, minus = pixels.copy(), pixels.copy()
            plus[i, j] += h
            minus[i, j] -= h
            numeric = (attack_loss(forward(self.model, plus)).value
                       - attack_loss(forward(self.model, minus)).value) / (2 * h)
            if abs(grad[i, j] - numeric) > 1e-4 * max(1e-3, abs(numeric)):
                failures += 1
        self.assertLessEqual(failures, 1)
        self.assertAlmostEqual(loss.value, attack_loss(forward(self.model, self.image)).value)

    def test_saturated_sigmoids(self):
        """Strongly negative objectness leaves almost no gradient"""
        model = tiny_model(seed=2, objectness_bias=-30.0)
        _, grad = backward_to_input(model, np.zeros((32, 32)), lambda raw: attack_loss(raw))
        self.assertLess(np.max(np.abs(grad)), 1e-10)


class TestMagnitudeGradient(unittest.TestCase):
    """End-to-end chain from |Y| through the pixels to the attack loss"""

    def test_matches_finite_differences(self):
        model = tiny_model(seed=3, objectness_bias=0.0, head_scale=100.0)
        signal, _ = tiny_signal(seed=5)
        magnitude, _ = split(stft(signal, TINY_STFT))
        mapping = DbMapping.from_magnitude(magnitude)
        loss_fn = lambda raw: attack_loss(raw)

        def objective(entries):
            image = to_grayscale(MagnitudeMatrix(entries, TINY_STFT), mapping)
            return attack_loss(forward(model, image)).value

        _, grad = magnitude_gradient(model, magnitude, mapping, loss_fn)
        entries = np.array(magnitude.entries)
        levels = (mapping.to_db(entries[:32]) - mapping.db_min) / mapping.span
        inside = np.argwhere((levels > 0.01) & (levels < 0.99))
        rng = np.random.default_rng(1)
        failures = 0
        for k, m in inside[rng.choice(len(inside), 30, replace=False)]:
            h = 1e-6 * entries[k, m]
            plus, minus = entries.copy(), entries.copy()
            plus[k, m] += h
            minus[k, m] -= h
            numeric = (objective(plus) - objective(minus)) / (2 * h)
            if abs(grad[k, m] - numeric) > 1e-6 + 1e-4 * abs(numeric):
                failures += 1
        self.assertLessEqual(failures, 1)

    def test_mirrored(self):
        model = tiny_model(seed=3, objectness_bias=0.0, head_scale=100.0)
        signal, _ = tiny_signal(seed=5)
        magnitude, _ = split(stft(signal, TINY_STFT))
        _, grad = magnitude_gradient(model, magnitude, DbMapping.from_magnitude(magnitude),
                                     lambda raw: attack_loss(raw))
        np.testing.assert_array_equal(grad[33:], grad[1:32][::-1])
        np.testing.assert_array_equal(grad[32], 0.0)


if __name__ == '__main__':
    unittest.main()
