"""
Signal files, synthetic burst generation and datasets
"""

from src.data.signal_io import SignalBuffer, read_signal_file, write_signal_file
from src.data.generator import GenConfig, GroundTruthLabel, BurstKind, generate_burst_signal
from src.data.dataset import (
    DatasetManifest, ManifestEntry, build_dataset, load_manifest, load_dataset_entry,
)

__all__ = [
    'SignalBuffer', 'read_signal_file', 'write_signal_file',
    'GenConfig', 'GroundTruthLabel', 'BurstKind', 'generate_burst_signal',
    'DatasetManifest', 'ManifestEntry', 'build_dataset', 'load_manifest', 'load_dataset_entry',
]
