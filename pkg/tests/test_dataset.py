"""
Unit tests for label files, manifests and dataset generation
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import yaml

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.errors import DatasetFormatError
from src.data.dataset import (
    build_dataset, file_digest, format_labels, load_dataset_entry, load_manifest, parse_labels,
)
from src.data.generator import GroundTruthLabel, generate_burst_signal
from tests.helpers import tiny_gen_config


class TestLabelText(unittest.TestCase):
    """Test the label line format"""

    def test_format(self):
        text = format_labels([GroundTruthLabel(2, 0.5, 0.25, 0.1, 0.05)])
        self.assertEqual(text, "2 0.500000 0.250000 0.100000 0.050000\n")

    def test_parse_skips_blank_lines(self):
        labels = parse_labels("0 0.1 0.2 0.3 0.4\n\n1 0.5 0.5 0.2 0.2\n")
        self.assertEqual([l.class_id for l in labels], [0, 1])

    def test_parse_rejects_short_line(self):
        with self.assertRaises(ValueError):
            parse_labels("0 0.1 0.2\n")

    def test_parse_errors_name_the_line(self):
        cases = {"nan box": "0 0.5 0.5 0.1 0.1\n1 nan 0.5 0.1 0.1\n",
                 "text": "0 0.5 0.5 0.1 0.1\n1 a 0.5 0.1 0.1\n",
                 "negative class": "0 0.5 0.5 0.1 0.1\n-1 0.5 0.5 0.1 0.1\n"}
        for name, text in cases.items():
            with self.subTest(name):
                with self.assertRaises(DatasetFormatError) as ctx:
                    parse_labels(text)
                self.assertIn("line 2", str(ctx.exception))
                self.assertIsInstance(ctx.exception, ValueError)

    def test_parse_clamps_into_unit_square(self):
        """A box past the left edge keeps only its inside part"""
        (label,) = parse_labels("0 0.05 0.5 0.2 0.1\n")
        self.assertAlmostEqual(label.w, 0.15)
        self.assertAlmostEqual(label.cx, 0.075)
        self.assertAlmostEqual(label.h, 0.1)
        (corner,) = parse_labels("1 0.98 0.99 0.1 0.1\n")
        x0, x1, y0, y1 = corner.extent()
        self.assertAlmostEqual(x1, 1.0)
        self.assertAlmostEqual(y1, 1.0)
        self.assertAlmostEqual(x0, 0.93)
        self.assertAlmostEqual(y0, 0.94)

    def test_parse_rejects_box_outside(self):
        with self.assertRaises(DatasetFormatError):
            parse_labels("0 1.5 0.5 0.2 0.1\n")


class TestBuildDataset(unittest.TestCase):
    """Test on-disk dataset generation"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_files_and_manifest(self):
        """n files, each with a label file and matching digests"""
        manifest = build_dataset(3, tiny_gen_config(seed=7), self.dir / "d")
        self.assertEqual(len(manifest), 3)
        self.assertTrue((self.dir / "d" / "manifest.yaml").is_file())
        for index, entry in enumerate(manifest.entries):
            with self.subTest(index=index):
                self.assertEqual(entry.seed, 7 + index)
                self.assertEqual(file_digest(manifest.signal_path(index)), entry.signal_sha256)
                self.assertEqual(file_digest(manifest.label_path(index)), entry.label_sha256)

    def test_reload(self):
        """load_manifest reads back what build_dataset wrote"""
        built = build_dataset(2, tiny_gen_config(seed=3), self.dir / "d")
        loaded = load_manifest(self.dir / "d")
        self.assertEqual(loaded.entries, built.entries)
        self.assertEqual(loaded.sample_rate, built.sample_rate)
        self.assertEqual(loaded.master_seed, 3)

        signal, labels = load_dataset_entry(loaded, 1)
        original, original_labels = generate_burst_signal(tiny_gen_config(seed=4))
        self.assertEqual(len(labels), len(original_labels))
        np.testing.assert_allclose(signal.samples, original.samples, atol=2.0 / 32768)

    def test_same_seed_same_digests(self):
        a = build_dataset(2, tiny_gen_config(seed=9), self.dir / "a")
        b = build_dataset(2, tiny_gen_config(seed=9), self.dir / "b")
        self.assertEqual([e.signal_sha256 for e in a.entries], [e.signal_sha256 for e in b.entries])
        self.assertEqual([e.label_sha256 for e in a.entries], [e.label_sha256 for e in b.entries])

    def test_manifest_echoes_generator(self):
        build_dataset(1, tiny_gen_config(seed=0), self.dir / "d")
        data = yaml.safe_load((self.dir / "d" / "manifest.yaml").read_text())
        self.assertEqual(data["n_files"], 1)
        self.assertEqual(data["generator"]["signal_length"], tiny_gen_config().signal_length)

    def test_entry_out_of_range(self):
        manifest = build_dataset(1, tiny_gen_config(), self.dir / "d")
        with self.assertRaises(IndexError):
            load_dataset_entry(manifest, 5)

    def test_missing_manifest(self):
        with self.assertRaises(FileNotFoundError):
            load_manifest(self.dir / "missing")

    def test_malformed_manifest(self):
        cases = {"no sample rate": "files: []\n", "not a mapping": "- 1\n- 2\n",
                 "bad yaml": "files: [\n", "bad entry": "sample_rate: 1000\nfiles: [{colour: red}]\n"}
        for name, text in cases.items():
            with self.subTest(name):
                root = self.dir / name.replace(" ", "_")
                root.mkdir()
                (root / "manifest.yaml").write_text(text)
                with self.assertRaises(DatasetFormatError):
                    load_manifest(root)

    def test_generator_config_from_echo(self):
        config = tiny_gen_config(seed=4, n_bursts_range=(2, 3))
        manifest = load_manifest(build_dataset(1, config, self.dir / "d").root)
        self.assertEqual(manifest.generator_config(), config)


if __name__ == '__main__':
    unittest.main()
