"""
Grid detector: a strided convolution stack ending in a 1x1 prediction head

Each of the S x S output cells predicts an objectness logit, four box
offsets and n_classes class logits.
"""

import logging
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from src.core.constants import (
    INPUT_SIZE, GRID_SIZE, N_CLASSES, CHANNELS, LEAKY_SLOPE, OBJECTNESS_PRIOR,
    HEAD_INIT_SCALE, CONF_THRESH, NMS_IOU, MODEL_MAGIC, MODEL_VERSION,
)
from src.core.errors import ConfigError, DimensionError, ModelFormatError
from src.detector.layers import (
    ConvCache, conv2d_forward, conv2d_backward, leaky_relu_forward, leaky_relu_backward,
)
from src.detector.decode import RawGrid, DetectionBox, decode

logger = logging.getLogger(__name__)

KERNEL = 3


@dataclass(frozen=True)
class DetectorConfig:
    """Architecture and decoding thresholds"""
    input_h: int = INPUT_SIZE
    input_w: int = INPUT_SIZE
    grid_s: int = GRID_SIZE
    n_classes: int = N_CLASSES
    channels: Tuple[int, ...] = CHANNELS
    conf_thresh: float = CONF_THRESH
    nms_iou: float = NMS_IOU
    leaky_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.n_classes < 1:
            raise ConfigError("detector.n_classes", "must be >= 1")
        if self.grid_s < 1 or self.input_h % self.grid_s or self.input_w % self.grid_s:
            raise ConfigError("detector.grid_s",
                              f"input {self.input_h}x{self.input_w} not divisible by {self.grid_s}")
        factor = self.input_h // self.grid_s
        if factor != self.input_w // self.grid_s or factor & (factor - 1):
            raise ConfigError("detector.grid_s",
                              "input/grid ratio must be the same power of two in both directions")
        if len(self.channels) < self.n_down:
            raise ConfigError("detector.channels",
                              f"need at least {self.n_down} conv blocks to reach the grid")
        if any(c < 1 for c in self.channels):
            raise ConfigError("detector.channels", "channel widths must be positive")
        for key in ("conf_thresh", "nms_iou"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(f"detector.{key}", "must lie in [0, 1]")

    @property
    def n_down(self) -> int:
        """Stride-2 blocks needed to reduce the input to the grid"""
        return int(np.log2(self.input_h // self.grid_s))

    @property
    def n_outputs(self) -> int:
        return 5 + self.n_classes

    def layer_shapes(self) -> List[Tuple[Tuple[int, ...], Tuple[int, ...], int]]:
        """[(weight shape, bias shape, stride)] including the 1x1 head"""
        shapes = []
        in_ch = 1
        for index, out_ch in enumerate(self.channels):
            stride = 2 if index < self.n_down else 1
            shapes.append(((out_ch, in_ch, KERNEL, KERNEL), (out_ch,), stride))
            in_ch = out_ch
        shapes.append(((self.n_outputs, in_ch, 1, 1), (self.n_outputs,), 1))
        return shapes

    def parameter_count(self) -> int:
        """Closed form: sum of 9*cin*cout + cout over blocks, plus the head"""
        total = 0
        in_ch = 1
        for out_ch in self.channels:
            total += KERNEL * KERNEL * in_ch * out_ch + out_ch
            in_ch = out_ch
        return total + in_ch * self.n_outputs + self.n_outputs

    def to_dict(self) -> dict:
        data = asdict(self)
        data["channels"] = list(self.channels)
        return data


@dataclass
class ForwardCache:
    conv: List[ConvCache]
    positive: List[np.ndarray]


@dataclass(frozen=True)
class DetectorModel:
    """
    Weights and architecture

    params alternates weight and bias arrays in layer order; the model is
    treated as an immutable snapshot (training returns a new one).
    """
    config: DetectorConfig
    params: Tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.config.layer_shapes()
        if len(self.params) != 2 * len(shapes):
            raise DimensionError(f"expected {2 * len(shapes)} arrays, got {len(self.params)}")
        for index, (w_shape, b_shape, _) in enumerate(shapes):
            if self.params[2 * index].shape != w_shape or self.params[2 * index + 1].shape != b_shape:
                raise DimensionError(f"layer {index}: parameter shapes do not match the architecture")
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise DimensionError("model parameters contain non-finite values")

    @property
    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat(self) -> np.ndarray:
        """Parameter vector theta in layer order"""
        return np.concatenate([p.ravel() for p in self.params])

    def with_flat(self, theta: np.ndarray) -> "DetectorModel":
        """Same architecture, parameters taken from a flat vector"""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_parameters:
            raise DimensionError(f"expected {self.n_parameters} parameters, got {theta.size}")
        params, offset = [], 0
        for p in self.params:
            params.append(theta[offset:offset + p.size].reshape(p.shape).copy())
            offset += p.size
        return DetectorModel(self.config, tuple(params))

    def with_params(self, params: Sequence[np.ndarray]) -> "DetectorModel":
        return DetectorModel(self.config, tuple(np.array(p, dtype=np.float64) for p in params))

    def detect(self, signal, stft_config, mapping=None, conf_thresh: Optional[float] = None):
        """Detector protocol used by the evaluation harness"""
        from src.detector.pipeline import detect_signal
        return detect_signal(self, signal, stft_config, mapping, conf_thresh=conf_thresh)


def init_model(config: DetectorConfig, seed: int = 0) -> DetectorModel:
    """
    Deterministic initialization

    Hidden conv weights ~ N(0, 2 / fan_in); head weights use the same scale
    times HEAD_INIT_SCALE; the objectness bias starts at logit(0.01).
    """
    rng = np.random.default_rng(seed)
    shapes = config.layer_shapes()
    params = []
    for index, (w_shape, b_shape, _) in enumerate(shapes):
        fan_in = int(np.prod(w_shape[1:]))
        std = np.sqrt(2.0 / fan_in)
        bias = np.zeros(b_shape)
        if index == len(shapes) - 1:
            std *= HEAD_INIT_SCALE
            bias[0] = np.log(OBJECTNESS_PRIOR / (1.0 - OBJECTNESS_PRIOR))
        params.extend([rng.normal(0.0, std, w_shape), bias])
    return DetectorModel(config, tuple(params))


def _as_batch(model: DetectorModel, images) -> np.ndarray:
    """Accept a SpectrogramImage, an (H, W) array or a (B, H, W) stack"""
    pixels = getattr(images, "pixels", images)
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    expected = (model.config.input_h, model.config.input_w)
    if x.ndim != 3 or x.shape[1:] != expected:
        raise DimensionError(f"image shape {x.shape[-2:]} does not match detector input {expected}")
    return x[:, None]


def forward_batch(model: DetectorModel, images) -> Tuple[np.ndarray, ForwardCache]:
    """
    Batched forward pass

    Returns:
        ((B, S, S, 5 + n_classes) raw predictions, cache for backward_batch)
    """
    x = _as_batch(model, images)
    shapes = model.config.layer_shapes()
    slope = model.config.leaky_slope
    conv_caches, masks = [], []
    for index, (_, _, stride) in enumerate(shapes):
        weight, bias = model.params[2 * index], model.params[2 * index + 1]
        x, cache = conv2d_forward(x, weight, bias, stride)
        conv_caches.append(cache)
        if index < len(shapes) - 1:
            x, positive = leaky_relu_forward(x, slope)
            masks.append(positive)
    return x.transpose(0, 2, 3, 1), ForwardCache(conv_caches, masks)


def backward_batch(model: DetectorModel, cache: ForwardCache,
                   grad_raw: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Reverse-mode pass through the whole stack

    Args:
        cache: From forward_batch
        grad_raw: (B, S, S, 5 + n_classes) gradient w.r.t. the raw predictions

    Returns:
        ((B, H, W) gradient w.r.t. the input pixels, parameter gradients in params order)
    """
    slope = model.config.leaky_slope
    grad = np.ascontiguousarray(np.asarray(grad_raw, dtype=np.float64).transpose(0, 3, 1, 2))
    n_layers = len(cache.conv)
    grads: List[np.ndarray] = [None] * (2 * n_layers)
    for index in reversed(range(n_layers)):
        if index < n_layers - 1:
            grad = leaky_relu_backward(grad, cache.positive[index], slope)
        grad, dweight, dbias = conv2d_backward(grad, cache.conv[index])
        grads[2 * index], grads[2 * index + 1] = dweight, dbias
    return grad[:, 0], grads


def forward(model: DetectorModel, image) -> RawGrid:
    """Single-image forward pass"""
    raw, _ = forward_batch(model, image)
    return RawGrid(raw[0])


def detect_image(model: DetectorModel, image, conf_thresh: Optional[float] = None,
                 nms_iou: Optional[float] = None) -> List[DetectionBox]:
    """decode(forward(image)) with the model's default thresholds"""
    conf = model.config.conf_thresh if conf_thresh is None else conf_thresh
    iou = model.config.nms_iou if nms_iou is None else nms_iou
    return decode(forward(model, image), conf, iou)


def save_model(model: DetectorModel, path: Union[str, Path]) -> Path:
    """
    Versioned flat binary

    Layout: magic, uint32 version, uint32 config length, YAML config,
    float32 little-endian parameters in layer order (conv0.W, conv0.b, ..., head.W, head.b).
    """
    path = Path(path)
    config_bytes = yaml.safe_dump(model.config.to_dict(), sort_keys=True).encode("utf-8")
    header = MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(config_bytes))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + config_bytes + model.flat().astype("<f4").tobytes())
    logger.info("Saved model (%d parameters) to %s", model.n_parameters, path)
    return path


def load_model(path: Union[str, Path]) -> DetectorModel:
    """Inverse of save_model"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    data = path.read_bytes()
    magic_len = len(MODEL_MAGIC)
    if data[:magic_len] != MODEL_MAGIC or len(data) < magic_len + 8:
        raise ModelFormatError(f"{path}: not a detector model file")
    version, config_len = struct.unpack("<II", data[magic_len:magic_len + 8])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    start = magic_len + 8
    config = DetectorConfig(**yaml.safe_load(data[start:start + config_len].decode("utf-8")))
    payload = data[start + config_len:]
    if len(payload) % 4:
        raise ModelFormatError(f"{path}: truncated parameter block")
    theta = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if theta.size != config.parameter_count():
        raise ModelFormatError(f"{path}: expected {config.parameter_count()} parameters, found {theta.size}")
    template = init_model(config)
    return template.with_flat(theta)
