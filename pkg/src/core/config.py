"""
Layered run configuration

defaults < YAML file < --set overrides. Keys are dotted (section.key);
anything not present in the defaults is rejected.
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import yaml

from src.core import constants as C
from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = "run_config.yaml"

_DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "data": {
        "n_files": 200,
        "signal_length": (C.INPUT_SIZE - 1) * (C.DESK_N_FFT - C.DESK_OVERLAP) + C.DESK_N_FFT,
        "sample_rate": C.DESK_SAMPLE_RATE,
        "n_bursts_range": [1, 4],
        "freq_range": [20_000.0, 380_000.0],
        "duration_range": [0.004, 0.016],
        "amplitude_range": [0.08, 0.25],
        "noise_floor_std": C.NOISE_FLOOR_STD,
        "burst_kinds": ["tone", "linear-chirp", "two-tone-fsk"],
        "min_bandwidth_hz": 18_750.0,
    },
    "stft": {
        "n_fft": C.DESK_N_FFT,
        "overlap": C.DESK_OVERLAP,
        "window_kind": "blackman",
        "floor": C.ISTFT_FLOOR,
    },
    "mapping": {
        "dynamic_range_db": C.DB_DYNAMIC_RANGE,
        "epsilon": C.DB_EPSILON,
    },
    "detector": {
        "input_h": C.INPUT_SIZE,
        "input_w": C.INPUT_SIZE,
        "grid_s": C.GRID_SIZE,
        "n_classes": C.N_CLASSES,
        "channels": list(C.CHANNELS),
        "conf_thresh": C.CONF_THRESH,
        "nms_iou": C.NMS_IOU,
        "leaky_slope": C.LEAKY_SLOPE,
    },
    "train": {
        "epochs": C.TRAIN_EPOCHS,
        "batch_size": 8,
        "lr": 0.01,
        "min_lr_ratio": 0.01,
        "warmup_epochs": 1,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "grad_clip": 10.0,
        "val_fraction": 0.1,
        "jitter_std": C.JITTER_STD,
        "synthetic_per_epoch": C.SYNTHETIC_PER_EPOCH,
        "keep_best": True,
    },
    "attack": {
        "method": "pgd",
        "alpha": 0.02,
        "n_iter": C.ATTACK_N_ITER,
        "step_eps": None,
        "clip_eps": None,
        "decay": C.ATTACK_DECAY,
        "lam": C.ATTACK_LAMBDA,
        "max_decay_steps": C.MAX_DECAY_STEPS,
        "norm_scope": "full",
    },
    "eval": {
        "rn_alphas": list(C.RN_ALPHAS),
        "attack_alphas": list(C.ATTACK_ALPHAS),
        "methods": ["fgm", "pgd"],
        "iou_thresh": C.IOU_THRESH,
    },
    "theory": {
        "trials": 1000,
        "alpha_min": 0.001,
        "alpha_max": 0.1,
        "n_fft": C.WIDE_N_FFT,
        "overlap": C.WIDE_OVERLAP,
        "max_vectors": 8,
    },
}

# Keys whose default is None but which take a positive number
_OPTIONAL_NUMBERS = {"attack.step_eps", "attack.clip_eps"}


def default_config() -> Dict[str, Any]:
    """A fresh copy of the built-in defaults"""
    return copy.deepcopy(_DEFAULTS)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _coerce(key: str, default, value):
    """Check value against the type of its default"""
    if key in _OPTIONAL_NUMBERS:
        if value is None or _is_number(value):
            return None if value is None else float(value)
        raise ConfigError(key, f"expected a number or null, got {value!r}")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected true/false, got {value!r}")
    if isinstance(default, int):
        if _is_number(value) and float(value).is_integer():
            return int(value)
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if isinstance(default, float):
        if _is_number(value):
            return float(value)
        raise ConfigError(key, f"expected a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(key, f"expected a string, got {value!r}")
    if isinstance(default, list):
        if isinstance(value, (list, tuple)):
            return list(value)
        raise ConfigError(key, f"expected a list, got {value!r}")
    return value


def _set(config: Dict[str, Any], dotted: str, value) -> None:
    parts = dotted.split(".")
    if len(parts) == 1:
        if dotted not in config or isinstance(config[dotted], dict):
            raise ConfigError(dotted, "unknown key")
        config[dotted] = _coerce(dotted, _DEFAULTS[dotted], value)
        return
    if len(parts) != 2 or parts[0] not in config or not isinstance(config[parts[0]], dict):
        raise ConfigError(dotted, "unknown key")
    section, key = parts
    if key not in config[section]:
        raise ConfigError(dotted, "unknown key")
    config[section][key] = _coerce(dotted, _DEFAULTS[section][key], value)


def merge_config(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    """Apply a nested overlay, rejecting keys the defaults do not define"""
    merged = copy.deepcopy(base)
    for name, value in (overlay or {}).items():
        if isinstance(value, dict):
            if name not in merged or not isinstance(merged[name], dict):
                raise ConfigError(name, "unknown section")
            for key, item in value.items():
                _set(merged, f"{name}.{key}", item)
        else:
            _set(merged, name, value)
    return merged


def load_yaml_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return data


def parse_override(text: str) -> Tuple[str, Any]:
    """'attack.alpha=0.05' -> ('attack.alpha', 0.05); values parse as YAML"""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(text, "override has an empty key")
    try:
        return key, yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse value {raw!r}: {exc}") from None


def validate_config(config: Dict[str, Any]) -> None:
    """Construct every typed config once; each raises ConfigError naming its key"""
    from src.dsp.stft import StftConfig

    gen_config(config).validate()
    stft = stft_config(config)
    detector = detector_config(config)
    train_config(config)
    attack_config(config)
    StftConfig(config["theory"]["n_fft"], config["theory"]["overlap"])

    if config["mapping"]["dynamic_range_db"] <= 0:
        raise ConfigError("mapping.dynamic_range_db", "must be positive")
    if config["mapping"]["epsilon"] <= 0:
        raise ConfigError("mapping.epsilon", "must be positive")
    if detector.input_h != stft.n_positive:
        raise ConfigError("detector.input_h",
                          f"must equal n_fft / 2 = {stft.n_positive}, got {detector.input_h}")
    frames = stft.n_frames(config["data"]["signal_length"])
    if frames != detector.input_w:
        raise ConfigError("data.signal_length",
                          f"gives {frames} frames but the detector expects {detector.input_w} "
                          f"(use {stft.signal_length(detector.input_w)})")
    if config["data"]["n_files"] < 0:
        raise ConfigError("data.n_files", "must be non-negative")
    theory = config["theory"]
    if theory["trials"] < 1:
        raise ConfigError("theory.trials", "must be >= 1")
    if not 0 <= theory["alpha_min"] <= theory["alpha_max"]:
        raise ConfigError("theory.alpha_min", "need 0 <= alpha_min <= alpha_max")
    if not 0 < config["eval"]["iou_thresh"] <= 1:
        raise ConfigError("eval.iou_thresh", "must lie in (0, 1]")
    for key in ("rn_alphas", "attack_alphas"):
        if any(not _is_number(a) or a < 0 for a in config["eval"][key]):
            raise ConfigError(f"eval.{key}", "budgets must be non-negative numbers")


def resolve_config(path: Optional[Union[str, Path]] = None,
                   overrides: Iterable[str] = ()) -> Dict[str, Any]:
    """
    Build the effective configuration

    Args:
        path: Optional YAML file
        overrides: 'section.key=value' strings, applied last

    Returns:
        Validated nested dict
    """
    config = default_config()
    if path is not None:
        config = merge_config(config, load_yaml_config(path))
    for text in overrides:
        key, value = parse_override(text)
        _set(config, key, value)
    validate_config(config)
    return config


def gen_config(config: Dict[str, Any], seed: Optional[int] = None):
    from src.data.generator import GenConfig

    data = config["data"]
    return GenConfig(
        signal_length=data["signal_length"],
        sample_rate=data["sample_rate"],
        n_bursts_range=tuple(data["n_bursts_range"]),
        freq_range=tuple(data["freq_range"]),
        duration_range=tuple(data["duration_range"]),
        amplitude_range=tuple(data["amplitude_range"]),
        noise_floor_std=data["noise_floor_std"],
        burst_kinds=tuple(data["burst_kinds"]),
        min_bandwidth_hz=data["min_bandwidth_hz"],
        seed=config["seed"] if seed is None else seed,
    )


def stft_config(config: Dict[str, Any]):
    from src.dsp.stft import StftConfig
    return StftConfig(**config["stft"])


def detector_config(config: Dict[str, Any]):
    from src.detector.model import DetectorConfig
    params = dict(config["detector"])
    params["channels"] = tuple(params["channels"])
    return DetectorConfig(**params)


def train_config(config: Dict[str, Any], seed: Optional[int] = None):
    from src.detector.train import TrainConfig
    return TrainConfig(**config["train"], seed=config["seed"] if seed is None else seed)


def attack_config(config: Dict[str, Any], seed: Optional[int] = None):
    from src.attack.attacks import AttackConfig
    return AttackConfig(**config["attack"], seed=config["seed"] if seed is None else seed)


@dataclass
class RunConfig:
    """What one CLI invocation ran with"""
    subcommand: str
    out_dir: Path
    seed: int
    config_path: Optional[Path] = None
    overrides: Tuple[str, ...] = ()
    resolved: Dict[str, Any] = field(default_factory=default_config)

    def write(self) -> Path:
        """Echo the fully resolved configuration into the run directory"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / RUN_CONFIG_NAME
        echo = {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config_file": str(self.config_path) if self.config_path else None,
            "overrides": list(self.overrides),
            "config": self.resolved,
        }
        with open(path, "w", encoding="utf-8") as handle:
            yaml.safe_dump(echo, handle, sort_keys=False)
        logger.debug("Wrote %s", path)
        return path
