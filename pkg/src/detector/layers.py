"""
Convolution and leaky-ReLU layers with explicit forward/backward passes

Arrays are laid out (batch, channels, height, width). Forward passes return
the output together with a cache that the matching backward pass consumes,
so a model holds no per-call state.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class ConvCache:
    input_shape: Tuple[int, int, int, int]
    cols: np.ndarray       # (B, C, Ho, Wo, k, k) strided view of the padded input
    weight: np.ndarray
    stride: int
    pad: int


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                   stride: int = 1) -> Tuple[np.ndarray, ConvCache]:
    """
    Cross-correlation with "same" zero padding (k // 2)

    Args:
        x: (B, C, H, W) input
        weight: (O, C, k, k) filters
        bias: (O,) offsets
        stride: Step in both directions

    Returns:
        ((B, O, Ho, Wo) output, cache)
    """
    k = weight.shape[-1]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, O)
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    return np.ascontiguousarray(out), ConvCache(x.shape, cols, weight, stride, pad)


def conv2d_backward(dout: np.ndarray, cache: ConvCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of conv2d_forward

    Args:
        dout: (B, O, Ho, Wo) upstream gradient
        cache: From the forward pass

    Returns:
        (dx, dweight, dbias)
    """
    batch, channels, height, width = cache.input_shape
    k = cache.weight.shape[-1]
    s, pad = cache.stride, cache.pad
    out_h, out_w = dout.shape[2], dout.shape[3]

    dweight = np.tensordot(dout, cache.cols, axes=([0, 2, 3], [0, 2, 3]))
    dbias = dout.sum(axis=(0, 2, 3))

    dcols = np.tensordot(dout, cache.weight, axes=([1], [0]))  # (B, Ho, Wo, C, k, k)
    dxp = np.zeros((batch, channels, height + 2 * pad, width + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + height, pad:pad + width] if pad else dxp
    return dx, dweight, dbias


def leaky_relu_forward(x: np.ndarray, slope: float) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (output, mask of positive inputs)"""
    positive = x > 0
    return np.where(positive, x, slope * x), positive


def leaky_relu_backward(dout: np.ndarray, positive: np.ndarray, slope: float) -> np.ndarray:
    return np.where(positive, dout, slope * dout)


def conv_output_size(size: int, k: int, stride: int) -> int:
    """Output length of a "same"-padded strided convolution"""
    return (size + 2 * (k // 2) - k) // stride + 1
