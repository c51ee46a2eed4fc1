"""
Unit tests for IoU, matching, AP and the dataset report
"""

import os
import sys
import unittest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.generator import GroundTruthLabel
from src.detector.decode import DetectionBox
from src.evaluation.metrics import (
    average_precision, evaluate_detections, iou, match_detections, match_flags,
)


def _det(class_id, cx, cy, confidence, w=0.2, h=0.2):
    return DetectionBox(class_id, cx, cy, w, h, confidence)


def _gt(class_id, cx, cy, w=0.2, h=0.2):
    return GroundTruthLabel(class_id, cx, cy, w, h)


class TestIou(unittest.TestCase):

    def test_identical(self):
        self.assertAlmostEqual(iou(_gt(0, 0.5, 0.5), _gt(0, 0.5, 0.5)), 1.0)

    def test_half_shift(self):
        """Shifting by half the width leaves 1/3 overlap"""
        self.assertAlmostEqual(iou(_gt(0, 0.5, 0.5), _gt(0, 0.6, 0.5)), 1.0 / 3.0)

    def test_disjoint(self):
        self.assertEqual(iou(_gt(0, 0.2, 0.2), _gt(0, 0.8, 0.8)), 0.0)

    def test_zero_area(self):
        self.assertEqual(iou(_det(0, 0.5, 0.5, 0.9, w=0.0), _gt(0, 0.5, 0.5)), 0.0)


class TestMatching(unittest.TestCase):

    def test_one_match_per_truth(self):
        gts = [_gt(0, 0.5, 0.5)]
        dets = [_det(0, 0.5, 0.5, 0.9), _det(0, 0.51, 0.5, 0.8)]
        self.assertEqual(match_flags(dets, gts), [True, False])
        self.assertEqual(match_detections(dets, gts), (1, 1, 0))

    def test_class_must_agree(self):
        self.assertEqual(match_detections([_det(1, 0.5, 0.5, 0.9)], [_gt(0, 0.5, 0.5)]), (0, 1, 1))

    def test_iou_threshold_inclusive(self):
        gts = [_gt(0, 0.5, 0.5)]
        dets = [_det(0, 0.6, 0.5, 0.9)]
        self.assertEqual(match_flags(dets, gts, iou_thresh=0.3), [True])
        self.assertEqual(match_flags(dets, gts, iou_thresh=0.5), [False])

    def test_best_overlap_wins(self):
        gts = [_gt(0, 0.3, 0.5), _gt(0, 0.52, 0.5)]
        dets = [_det(0, 0.5, 0.5, 0.9), _det(0, 0.3, 0.5, 0.8)]
        self.assertEqual(match_flags(dets, gts), [True, True])

    def test_empty(self):
        self.assertEqual(match_detections([], [_gt(0, 0.5, 0.5)]), (0, 0, 1))
        self.assertEqual(match_detections([_det(0, 0.5, 0.5, 0.9)], []), (0, 1, 0))


class TestAveragePrecision(unittest.TestCase):

    def test_hand_case(self):
        self.assertAlmostEqual(average_precision([True, False, True], 2), 5.0 / 6.0)

    def test_perfect(self):
        self.assertAlmostEqual(average_precision([True, True], 2), 1.0)

    def test_all_false_positives(self):
        self.assertEqual(average_precision([False, False], 3), 0.0)
        self.assertEqual(average_precision([], 3), 0.0)

    def test_partial_recall(self):
        self.assertAlmostEqual(average_precision([True], 4), 0.25)

    def test_no_ground_truth(self):
        self.assertIsNone(average_precision([False], 0))


class TestEvaluateDetections(unittest.TestCase):

    def setUp(self):
        self.truths = [[_gt(0, 0.3, 0.3), _gt(1, 0.7, 0.7)], [_gt(0, 0.5, 0.5)]]

    def test_perfect_detector(self):
        preds = [[_det(g.class_id, g.cx, g.cy, 0.9) for g in gts] for gts in self.truths]
        report = evaluate_detections(preds, self.truths, n_classes=3)
        self.assertAlmostEqual(report.map, 1.0)
        self.assertEqual((report.recall, report.precision), (1.0, 1.0))
        self.assertIsNone(report.per_class_ap[2])
        self.assertEqual(report.as_row(), {"mAP": 1.0, "recall": 1.0, "precision": 1.0})

    def test_no_detections(self):
        report = evaluate_detections([[], []], self.truths, n_classes=3)
        self.assertEqual(report.map, 0.0)
        self.assertEqual(report.precision, 0.0)
        self.assertEqual(report.recall, 0.0)
        self.assertEqual(report.false_negatives, 3)

    def test_confidence_scale_invariance(self):
        preds = [[_det(0, 0.3, 0.3, 0.6), _det(0, 0.8, 0.1, 0.7)], [_det(0, 0.5, 0.5, 0.4)]]
        scaled = [[_det(d.class_id, d.cx, d.cy, d.confidence / 2) for d in dets] for dets in preds]
        a = evaluate_detections(preds, self.truths, n_classes=2)
        b = evaluate_detections(scaled, self.truths, n_classes=2)
        self.assertAlmostEqual(a.map, b.map)
        self.assertEqual(a.per_class_ap, b.per_class_ap)

    def test_thresholded_counts(self):
        """Precision and recall come from the thresholded sets"""
        preds = [[_det(0, 0.3, 0.3, 0.9), _det(1, 0.1, 0.9, 0.1)], [_det(0, 0.5, 0.5, 0.05)]]
        kept = [[d for d in dets if d.confidence >= 0.25] for dets in preds]
        report = evaluate_detections(preds, self.truths, n_classes=2, thresholded=kept)
        self.assertEqual((report.true_positives, report.false_positives, report.false_negatives),
                         (1, 0, 2))
        self.assertAlmostEqual(report.precision, 1.0)
        self.assertAlmostEqual(report.recall, 1.0 / 3.0)
        self.assertAlmostEqual(report.per_class_ap[0], 1.0)
        self.assertAlmostEqual(report.per_class_ap[1], 0.0)

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            evaluate_detections([[]], self.truths, n_classes=2)


if __name__ == '__main__':
    unittest.main()
