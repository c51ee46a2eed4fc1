"""
Unit tests for raw i16 signal files
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.errors import SignalFormatError
from src.data.signal_io import SignalBuffer, read_signal_file, write_signal_file


class TestSignalBuffer(unittest.TestCase):
    """Test the in-memory signal container"""

    def test_samples_are_read_only(self):
        """Buffers are immutable snapshots"""
        buffer = SignalBuffer(np.zeros(8), 1000)
        with self.assertRaises(ValueError):
            buffer.samples[0] = 1.0

    def test_rejects_bad_input(self):
        """Empty, non-finite and rate-less signals are refused"""
        cases = {
            "empty": (np.zeros(0), 1000),
            "nan": (np.array([0.0, np.nan]), 1000),
            "rate": (np.zeros(4), 0),
        }
        for name, (samples, rate) in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(SignalFormatError):
                    SignalBuffer(samples, rate)

    def test_norm_and_duration(self):
        buffer = SignalBuffer(np.array([3.0, 4.0]), 2)
        self.assertAlmostEqual(buffer.norm(), 5.0)
        self.assertAlmostEqual(buffer.duration, 1.0)
        self.assertEqual(len(buffer), 2)


class TestSignalFiles(unittest.TestCase):
    """Test reading and writing i16 files"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_quantization_error_within_one_step(self):
        """|x| <= 0.5 survives a write/read cycle within 1/32767"""
        rng = np.random.default_rng(3)
        samples = rng.uniform(-0.5, 0.5, 4096)
        path = self.dir / "q.bin"
        clamped = write_signal_file(SignalBuffer(samples, 1000), path)
        back = read_signal_file(path, 1000)

        self.assertEqual(clamped, 0)
        self.assertLessEqual(np.max(np.abs(back.samples - samples)), 1.0 / 32767)

    def test_quantization_error_bound_full_scale(self):
        """Across [-1, 1] the error is bounded by (|x| + 0.5) / 32768"""
        samples = np.linspace(-1.0, 1.0, 2001)
        path = self.dir / "full.bin"
        write_signal_file(SignalBuffer(samples, 1000), path)
        back = read_signal_file(path, 1000)
        bound = (np.abs(samples) + 0.5) / 32768 + 1e-12
        self.assertTrue(np.all(np.abs(back.samples - samples) <= bound))

    def test_file_layout(self):
        """Two bytes per sample, little-endian, no header"""
        path = self.dir / "layout.bin"
        write_signal_file(SignalBuffer(np.array([0.0, 1.0, -1.0]), 1000), path)
        raw = path.read_bytes()
        self.assertEqual(len(raw), 6)
        np.testing.assert_array_equal(np.frombuffer(raw, dtype="<i2"), [0, 32767, -32767])

    def test_clamps_out_of_range_samples(self):
        """Samples beyond full scale are clamped and counted"""
        path = self.dir / "clamp.bin"
        with self.assertLogs("src.data.signal_io", level="WARNING"):
            clamped = write_signal_file(SignalBuffer(np.array([1.5, -2.0, 0.1]), 1000), path)
        back = read_signal_file(path, 1000)

        self.assertEqual(clamped, 2)
        self.assertAlmostEqual(back.samples[0], 32767 / 32768)
        self.assertAlmostEqual(back.samples[1], -32767 / 32768)

    def test_malformed_files(self):
        """Odd byte counts and empty files are format errors"""
        odd = self.dir / "odd.bin"
        odd.write_bytes(b"\x00\x01\x02")
        empty = self.dir / "empty.bin"
        empty.write_bytes(b"")

        for path in (odd, empty):
            with self.subTest(path=path.name):
                with self.assertRaises(SignalFormatError):
                    read_signal_file(path, 1000)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            read_signal_file(self.dir / "nope.bin", 1000)


if __name__ == '__main__':
    unittest.main()
