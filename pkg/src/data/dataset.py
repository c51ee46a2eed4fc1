"""
On-disk synthetic dataset: signal files, label files and a YAML manifest
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, asdict
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml

from src.core.errors import DatasetFormatError
from src.core.parallel import map_ordered
from src.data.generator import GenConfig, GroundTruthLabel, generate_burst_signal
from src.data.signal_io import SignalBuffer, read_signal_file, write_signal_file

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MANIFEST_NAME = "manifest.yaml"
SIGNAL_DIR = "signals"
LABEL_DIR = "labels"


def format_labels(labels: List[GroundTruthLabel]) -> str:
    """One "class cx cy w h" line per target"""
    return "".join(
        f"{lab.class_id} {lab.cx:.6f} {lab.cy:.6f} {lab.w:.6f} {lab.h:.6f}\n" for lab in labels
    )


def parse_labels(text: str) -> List[GroundTruthLabel]:
    """
    Inverse of format_labels; blank lines are ignored

    Boxes are clamped into the unit square, so a box that pokes past an
    edge comes back shrunk to the part that lies inside.

    Raises:
        DatasetFormatError: Malformed line or a box with nothing inside the square
    """
    labels = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise DatasetFormatError(f"label line {line_no}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
            if not all(math.isfinite(v) for v in (cx, cy, w, h)):
                raise ValueError("non-finite box coordinate")
            labels.append(GroundTruthLabel.from_extent(
                class_id, cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2))
        except ValueError as exc:
            raise DatasetFormatError(f"label line {line_no}: {exc}") from None
    return labels


def write_label_file(labels: List[GroundTruthLabel], path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_labels(labels), encoding="utf-8", newline="\n")


def read_label_file(path: PathLike) -> List[GroundTruthLabel]:
    return parse_labels(Path(path).read_text(encoding="utf-8"))


def file_digest(path: PathLike) -> str:
    """SHA-256 hex digest of a file"""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ManifestEntry:
    """One signal/label pair, paths relative to the manifest directory"""
    signal: str
    label: str
    seed: int
    n_targets: int
    signal_sha256: str
    label_sha256: str


@dataclass
class DatasetManifest:
    """
    Dataset index

    Attributes:
        root: Directory holding manifest.yaml
        sample_rate: Hz, shared by every file
        master_seed: File i uses master_seed + i
        generator: Echo of the GenConfig used
        entries: One per signal file
    """
    root: Path
    sample_rate: int
    master_seed: int
    generator: Dict = field(default_factory=dict)
    entries: List[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def signal_path(self, index: int) -> Path:
        return self.root / self.entries[index].signal

    def label_path(self, index: int) -> Path:
        return self.root / self.entries[index].label

    def load(self, index: int) -> Tuple[SignalBuffer, List[GroundTruthLabel]]:
        """Signal and labels of entry index"""
        return (read_signal_file(self.signal_path(index), self.sample_rate),
                read_label_file(self.label_path(index)))

    def generator_config(self) -> Optional[GenConfig]:
        """GenConfig the files were generated with; None for manifests without the echo"""
        if not self.generator:
            return None
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in self.generator.items()}
        try:
            return GenConfig(**params, seed=self.master_seed)
        except TypeError as exc:
            raise DatasetFormatError(f"manifest generator section is unreadable: {exc}") from None

    def to_dict(self) -> Dict:
        return {
            "sample_rate": self.sample_rate,
            "master_seed": self.master_seed,
            "n_files": len(self.entries),
            "generator": self.generator,
            "files": [asdict(e) for e in self.entries],
        }

    def save(self) -> Path:
        path = self.root / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)
        return path


def load_manifest(path: PathLike) -> DatasetManifest:
    """
    Load a manifest from its file or its directory

    Args:
        path: manifest.yaml or the directory containing it

    Returns:
        DatasetManifest
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"dataset manifest not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise DatasetFormatError(f"{path}: {exc}") from None

    try:
        entries = [ManifestEntry(**item) for item in data.get("files") or []]
        return DatasetManifest(
            root=path.parent,
            sample_rate=int(data["sample_rate"]),
            master_seed=int(data.get("master_seed", 0)),
            generator=data.get("generator") or {},
            entries=entries,
        )
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: malformed manifest ({exc!r})") from None


def load_dataset_entry(manifest: DatasetManifest, index: int) -> Tuple[SignalBuffer, List[GroundTruthLabel]]:
    """Signal and labels of one manifest entry"""
    if not 0 <= index < len(manifest):
        raise IndexError(f"entry {index} outside manifest of {len(manifest)} files")
    return manifest.load(index)


def _generator_echo(config: GenConfig) -> Dict:
    echo = asdict(config)
    for key, value in echo.items():
        if isinstance(value, tuple):
            echo[key] = list(value)
    echo["burst_kinds"] = list(config.burst_kinds)
    echo.pop("seed")
    return echo


def _build_one(index: int, config: GenConfig, out_dir: Path) -> ManifestEntry:
    seed = config.seed + index
    signal, labels = generate_burst_signal(config.with_seed(seed))

    stem = f"sig_{index:05d}"
    signal_rel = f"{SIGNAL_DIR}/{stem}.bin"
    label_rel = f"{LABEL_DIR}/{stem}.txt"
    write_signal_file(signal, out_dir / signal_rel)
    write_label_file(labels, out_dir / label_rel)

    return ManifestEntry(
        signal=signal_rel,
        label=label_rel,
        seed=seed,
        n_targets=len(labels),
        signal_sha256=file_digest(out_dir / signal_rel),
        label_sha256=file_digest(out_dir / label_rel),
    )


def build_dataset(n_files: int, config: GenConfig, out_dir: PathLike,
                  workers: Optional[int] = 1) -> DatasetManifest:
    """
    Generate n_files signals with labels and write the manifest

    config.seed is the master seed; file i is generated with master + i.

    Args:
        n_files: Number of signal files
        config: Generator parameters
        out_dir: Output directory
        workers: Process count

    Returns:
        The written DatasetManifest
    """
    if n_files < 0:
        raise ValueError(f"n_files must be non-negative, got {n_files}")
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info("Generating %d signals into %s", n_files, out_dir)
    build = partial(_build_one, config=config, out_dir=out_dir)
    entries = map_ordered(build, range(n_files), workers, desc="gen-data")

    manifest = DatasetManifest(
        root=out_dir,
        sample_rate=config.sample_rate,
        master_seed=config.seed,
        generator=_generator_echo(config),
        entries=entries,
    )
    manifest.save()
    logger.info("Dataset written: %d files, %d targets",
                len(entries), sum(e.n_targets for e in entries))
    return manifest
