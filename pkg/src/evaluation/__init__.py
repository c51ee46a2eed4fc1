"""
Detection metrics and experiment harnesses
"""

from src.evaluation.metrics import (
    MetricsReport, iou, match_detections, average_precision, evaluate_detections,
)

__all__ = ['MetricsReport', 'iou', 'match_detections', 'average_precision', 'evaluate_detections']
