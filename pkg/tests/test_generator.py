"""
Unit tests for the synthetic burst generator
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.errors import ConfigError, InfeasibleConfigError
from src.data.generator import BurstKind, GenConfig, GroundTruthLabel, generate_burst_signal
from tests.helpers import TINY_LENGTH, tiny_gen_config


class TestGenConfig(unittest.TestCase):
    """Test generator configuration validation"""

    def test_inverted_range_names_key(self):
        """min > max is reported against the offending key"""
        config = tiny_gen_config(freq_range=(300_000.0, 100_000.0))
        with self.assertRaises(ConfigError) as ctx:
            config.validate()
        self.assertEqual(ctx.exception.key, "data.freq_range")

    def test_burst_longer_than_signal(self):
        config = tiny_gen_config(duration_range=(0.01, 0.02))
        with self.assertRaises(InfeasibleConfigError):
            config.validate()

    def test_frequency_above_nyquist(self):
        config = tiny_gen_config(freq_range=(20_000.0, 500_000.0))
        with self.assertRaises(ConfigError):
            config.validate()

    def test_unknown_burst_kind(self):
        with self.assertRaises(ConfigError):
            BurstKind.from_name("qam")

    def test_kind_aliases(self):
        self.assertEqual(BurstKind.from_name("tone"), BurstKind.TONE)
        self.assertEqual(BurstKind.from_name("linear-chirp"), BurstKind.CHIRP)
        self.assertEqual(BurstKind.from_name("Two-Tone-FSK"), BurstKind.FSK)


class TestGroundTruthLabel(unittest.TestCase):
    """Test label construction"""

    def test_from_extent_clamps(self):
        label = GroundTruthLabel.from_extent(1, -0.1, 0.3, 0.5, 1.2)
        self.assertAlmostEqual(label.cx, 0.15)
        self.assertAlmostEqual(label.w, 0.3)
        self.assertAlmostEqual(label.cy, 0.75)
        self.assertAlmostEqual(label.h, 0.5)

    def test_rejects_outside_unit_square(self):
        with self.assertRaises(ValueError):
            GroundTruthLabel(0, 1.2, 0.5, 0.1, 0.1)
        with self.assertRaises(ValueError):
            GroundTruthLabel(0, 0.5, 0.5, 0.0, 0.1)


class TestGenerateBurstSignal(unittest.TestCase):
    """Test signal synthesis"""

    def test_deterministic(self):
        """Same seed, same samples and labels"""
        a, labels_a = generate_burst_signal(tiny_gen_config(seed=11))
        b, labels_b = generate_burst_signal(tiny_gen_config(seed=11))
        np.testing.assert_array_equal(a.samples, b.samples)
        self.assertEqual(labels_a, labels_b)

    def test_seeds_differ(self):
        a, _ = generate_burst_signal(tiny_gen_config(seed=1))
        b, _ = generate_burst_signal(tiny_gen_config(seed=2))
        self.assertFalse(np.array_equal(a.samples, b.samples))

    def test_labels_and_range(self):
        """Label count follows the burst range; samples stay inside full scale"""
        for seed in range(10):
            with self.subTest(seed=seed):
                signal, labels = generate_burst_signal(tiny_gen_config(seed=seed))
                self.assertEqual(len(signal), TINY_LENGTH)
                self.assertLessEqual(len(labels), 4)
                self.assertLessEqual(np.max(np.abs(signal.samples)), 0.95 + 1e-12)
                for label in labels:
                    self.assertIn(label.class_id, (0, 1, 2))
                    x0, x1, y0, y1 = label.extent()
                    self.assertGreaterEqual(x0, -1e-12)
                    self.assertLessEqual(x1, 1 + 1e-12)
                    self.assertGreaterEqual(y0, -1e-12)
                    self.assertLessEqual(y1, 1 + 1e-12)

    def test_noise_only(self):
        """Zero bursts gives the noise floor and no labels"""
        config = GenConfig(signal_length=32006, n_bursts_range=(0, 0), seed=5)
        signal, labels = generate_burst_signal(config)
        self.assertEqual(labels, [])
        self.assertAlmostEqual(np.std(signal.samples), 0.01, delta=0.001)

    def test_tone_box_covers_minimum_bandwidth(self):
        """A pure tone gets a band of min_bandwidth_hz"""
        config = tiny_gen_config(seed=4, burst_kinds=("tone",), n_bursts_range=(1, 1))
        _, labels = generate_burst_signal(config)
        self.assertEqual(len(labels), 1)
        self.assertEqual(labels[0].class_id, BurstKind.TONE)
        self.assertAlmostEqual(labels[0].h, 18_750.0 / 400_000.0)

    def test_tone_energy_at_label_frequency(self):
        """The spectral peak of a single loud tone sits inside its label band"""
        config = tiny_gen_config(seed=8, burst_kinds=("tone",), n_bursts_range=(1, 1),
                                 duration_range=(0.002, 0.002), noise_floor_std=0.0)
        signal, labels = generate_burst_signal(config)
        spectrum = np.abs(np.fft.rfft(signal.samples))
        peak = np.argmax(spectrum) / (len(signal) / 2)
        _, _, y0, y1 = labels[0].extent()
        self.assertGreaterEqual(peak, y0 - 0.01)
        self.assertLessEqual(peak, y1 + 0.01)


if __name__ == '__main__':
    unittest.main()
