"""
End-to-end tests for the spectro-adv command line
"""

import csv
import io
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import Mock, patch

import yaml

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.cli.app import COMMANDS, build_parser, main
from src.core.constants import EXIT_FAILURE, EXIT_OK, EXIT_USAGE
from src.data.dataset import load_manifest
from tests.helpers import TINY_LENGTH

TINY_CONFIG = {
    "data": {"signal_length": TINY_LENGTH, "duration_range": [0.0005, 0.0015],
             "amplitude_range": [0.2, 0.4]},
    "stft": {"n_fft": 64, "overlap": 2},
    "detector": {"input_h": 32, "input_w": 32, "grid_s": 4, "channels": [4, 8, 8]},
    "train": {"epochs": 1, "batch_size": 2, "val_fraction": 0.25, "synthetic_per_epoch": 2},
    "attack": {"n_iter": 3},
    "eval": {"rn_alphas": [0.01], "attack_alphas": [0.02]},
    "theory": {"trials": 4, "n_fft": 64, "overlap": 2, "max_vectors": 5},
}


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.config = self.tmp / "tiny.yaml"
        self.config.write_text(yaml.safe_dump(TINY_CONFIG))

    def tearDown(self):
        self._tmp.cleanup()

    def run_cli(self, *argv):
        """Run main, returning (exit code, stdout)"""
        with patch("sys.stdout", new_callable=io.StringIO) as out, \
                patch("sys.stderr", new_callable=io.StringIO):
            code = main(list(argv))
        return code, out.getvalue()

    def gen_data(self, name="data", n=3, seed=0):
        out = self.tmp / name
        code, _ = self.run_cli("gen-data", "--config", str(self.config), "--n", str(n),
                               "--seed", str(seed), "--out", str(out))
        self.assertEqual(code, EXIT_OK)
        return out

    def read_csv(self, path):
        with open(path, newline="") as handle:
            return list(csv.reader(handle))


class TestParser(unittest.TestCase):

    def test_subcommands(self):
        parser = build_parser()
        for command in ("gen-data", "verify-theorem", "roundtrip"):
            with self.subTest(command=command):
                self.assertEqual(parser.parse_args([command]).command, command)

    def test_missing_subcommand(self):
        with patch("sys.stderr", new_callable=io.StringIO):
            self.assertEqual(main([]), EXIT_USAGE)

    def test_unknown_method(self):
        with patch("sys.stderr", new_callable=io.StringIO):
            self.assertEqual(main(["attack", "--data", "x", "--method", "cw"]), EXIT_USAGE)


class TestGenData(CliTestCase):

    def test_count_and_run_files(self):
        out = self.gen_data(n=3)
        manifest = load_manifest(out)
        self.assertEqual(len(manifest), 3)
        self.assertTrue((out / "run_config.yaml").is_file())
        self.assertTrue((out / "run.log").is_file())

    def test_deterministic(self):
        first = load_manifest(self.gen_data("a", seed=5))
        second = load_manifest(self.gen_data("b", seed=5))
        self.assertEqual([e.signal_sha256 for e in first.entries], [e.signal_sha256 for e in second.entries])

    def test_bad_range_is_usage_error(self):
        code, _ = self.run_cli("gen-data", "--config", str(self.config),
                               "--set", "data.amplitude_range=[0.5, 0.1]",
                               "--out", str(self.tmp / "bad"))
        self.assertEqual(code, EXIT_USAGE)

    def test_unknown_key_is_usage_error(self):
        code, _ = self.run_cli("gen-data", "--set", "data.colour=red", "--out", str(self.tmp / "bad"))
        self.assertEqual(code, EXIT_USAGE)


class TestMissingInputs(CliTestCase):

    def test_missing_dataset(self):
        code, _ = self.run_cli("attack", "--config", str(self.config), "--method", "rn",
                               "--data", str(self.tmp / "absent"), "--out", str(self.tmp / "out"))
        self.assertEqual(code, EXIT_USAGE)

    def test_model_required_for_pgd(self):
        data = self.gen_data()
        code, _ = self.run_cli("attack", "--config", str(self.config), "--method", "pgd",
                               "--data", str(data), "--out", str(self.tmp / "out"))
        self.assertEqual(code, EXIT_USAGE)

    def test_corrupt_model(self):
        data = self.gen_data()
        model = self.tmp / "model.bin"
        model.write_bytes(b"not a model")
        code, _ = self.run_cli("attack", "--config", str(self.config), "--method", "fgm",
                               "--model", str(model), "--data", str(data),
                               "--out", str(self.tmp / "out"))
        self.assertEqual(code, EXIT_FAILURE)

    def test_corrupt_label_file(self):
        data = self.gen_data(n=2)
        manifest = load_manifest(data)
        manifest.label_path(0).write_text("0 0.5 nan 0.1 0.1\n")
        code, _ = self.run_cli("attack", "--config", str(self.config), "--method", "rn",
                               "--data", str(data), "--out", str(self.tmp / "out"))
        self.assertEqual(code, EXIT_FAILURE)

    def test_unexpected_value_error(self):
        failing = Mock(side_effect=ValueError("bad frame count"))
        with patch.dict(COMMANDS, {"roundtrip": failing}):
            code, _ = self.run_cli("roundtrip", "--config", str(self.config), "--n", "1",
                                   "--out", str(self.tmp / "rt"))
        self.assertEqual(code, EXIT_FAILURE)
        failing.assert_called_once()

    def test_wrong_range_length(self):
        code, _ = self.run_cli("gen-data", "--config", str(self.config), "--n", "1",
                               "--set", "data.n_bursts_range=[1, 2, 3]",
                               "--out", str(self.tmp / "data"))
        self.assertEqual(code, EXIT_USAGE)


class TestTheoryCommands(CliTestCase):

    def test_verify_theorem(self):
        out = self.tmp / "theorem"
        code, stdout = self.run_cli("verify-theorem", "--config", str(self.config),
                                    "--trials", "6", "--out", str(out))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("violations", stdout)
        self.assertEqual(len(self.read_csv(out / "bound_checks.csv")), 7)
        sums = self.read_csv(out / "vector_sum.csv")
        self.assertEqual(len(sums), 6)
        self.assertEqual(sums[5][3], "0")

    def test_roundtrip(self):
        out = self.tmp / "roundtrip"
        code, stdout = self.run_cli("roundtrip", "--config", str(self.config), "--preset", "config",
                                    "--n", "3", "--out", str(out))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("reference", stdout)
        rows = self.read_csv(out / "roundtrip.csv")
        note = rows[0][0]
        self.assertTrue(note.startswith("# mean round-trip error"))
        self.assertIn("reference 4.692%", note)
        self.assertIn("deviation", note)
        self.assertEqual(rows[1], ["file", "roundtrip_error", "time_ratio"])
        self.assertEqual(len(rows), 5)
        for row in rows[2:]:
            self.assertLess(float(row[1]), 1.0)


class TestPipeline(CliTestCase):
    """gen-data -> train -> attack -> eval -> plot on the tiny configuration"""

    def test_full_chain(self):
        data = self.gen_data(n=4)
        train_out = self.tmp / "train"
        code, _ = self.run_cli("train", "--config", str(self.config), "--data", str(data),
                               "--out", str(train_out))
        self.assertEqual(code, EXIT_OK)
        model = train_out / "model.bin"
        self.assertTrue(model.is_file())
        self.assertEqual(len(self.read_csv(train_out / "history.csv")), 2)

        attack_out = self.tmp / "attack"
        code, stdout = self.run_cli("attack", "--config", str(self.config), "--data", str(data),
                                    "--model", str(model), "--method", "pgd", "--alpha", "0.02",
                                    "--out", str(attack_out))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("PGD_0.02", stdout)
        report = self.read_csv(attack_out / "attack_report.csv")
        self.assertEqual(len(report), 5)
        for row in report[1:]:
            self.assertLessEqual(float(row[4]), 0.02 + 1e-6)

        eval_out = self.tmp / "eval"
        code, _ = self.run_cli("eval", "--config", str(self.config), "--data", str(data),
                               "--model", str(model), "--set", "eval.iou_thresh=0.3",
                               "--out", str(eval_out))
        self.assertEqual(code, EXIT_OK)
        with open(eval_out / "detection_table.csv") as handle:
            lines = handle.read().splitlines()
        self.assertTrue(lines[0].endswith("mAP at IoU 0.3"))
        self.assertEqual([line.split(",")[0] for line in lines[2:]],
                         ["Sample", "RN_0.01", "FGM_0.02", "PGD_0.02"])
        ratios = self.read_csv(eval_out / "ratio_table.csv")
        self.assertEqual([r[0] for r in ratios[1:]], ["None", "FGM", "PGD"])

        plot_out = self.tmp / "plot"
        adv = attack_out / "signals" / report[1][0]
        code, _ = self.run_cli("plot", "--config", str(self.config), "--data", str(data),
                               "--model", str(model), "--adv", str(adv), "--out", str(plot_out))
        self.assertEqual(code, EXIT_OK)
        self.assertTrue((plot_out / "spectrogram_clean.pgm").is_file())
        self.assertTrue((plot_out / "spectrogram_adversarial.pgm").is_file())
        self.assertEqual(len(self.read_csv(plot_out / "waveform.csv")), TINY_LENGTH + 1)

    def test_plot_index_out_of_range(self):
        data = self.gen_data(n=2)
        code, _ = self.run_cli("plot", "--config", str(self.config), "--data", str(data),
                               "--index", "5", "--method", "rn", "--out", str(self.tmp / "plot"))
        self.assertEqual(code, EXIT_USAGE)


if __name__ == '__main__':
    unittest.main()
