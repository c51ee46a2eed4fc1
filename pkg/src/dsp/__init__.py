"""
Short-time Fourier analysis/synthesis and the grayscale spectrogram mapping
"""

from src.dsp.stft import (
    StftConfig, TimeFreqMatrix, MagnitudeMatrix, PhaseMatrix,
    make_window, stft, istft, split, recombine, roundtrip_error,
)
from src.dsp.spectrogram import DbMapping, SpectrogramImage, to_grayscale, grayscale_grad

__all__ = [
    'StftConfig', 'TimeFreqMatrix', 'MagnitudeMatrix', 'PhaseMatrix',
    'make_window', 'stft', 'istft', 'split', 'recombine', 'roundtrip_error',
    'DbMapping', 'SpectrogramImage', 'to_grayscale', 'grayscale_grad',
]
