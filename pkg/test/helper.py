"""Builders shared by the tests.

They play the part of a recording setup: plane waves instead of rooms, toy
networks instead of trained ones and tiny simulated datasets.
"""
import math

import numpy as np
import torch
from torch import nn

from test import SAMPLE_RATE, TOY_FRAMES, TOY_GAMMA, TOY_GEOMETRY, TOY_HIDDEN
from doalab.config import SimulationConfig
from doalab.dsp import MultichannelSpectrogram, STFTConfig, geometry_by_name
from doalab.frontend import steering_vector
from doalab.neural.models import ModelConfig, build_model
from doalab.sim import RoomSpec, SourcePlacement

TOY_STFT = STFTConfig(sample_rate=SAMPLE_RATE, window_ms=1.0, hop_ms=0.5, fft_size=16)


def complex_noise(rng, shape):
    """Circular complex Gaussian samples of unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def plane_wave_spectrogram(geometry, doas, num_frames=64, config=STFTConfig(), seed=0, powers=None, noise=0.0):
    """Far-field sources with random amplitudes in every frame and bin, optionally with white sensor noise."""
    rng = np.random.default_rng(seed)
    freqs = config.frequencies()
    data = np.zeros((num_frames, geometry.num_mics, config.n_freqs), dtype=np.complex128)
    for index, theta in enumerate(doas):
        gain = 1.0 if powers is None else math.sqrt(powers[index])
        amplitude = gain * complex_noise(rng, (num_frames, config.n_freqs))
        data += amplitude[:, np.newaxis, :] * steering_vector(theta, geometry, freqs).T[np.newaxis]
    if noise:
        data += noise * complex_noise(rng, data.shape)
    return MultichannelSpectrogram(data, config)


def toy_model_config(kind, n_sources=2, **kwargs):
    """ModelConfig small enough for finite-difference checks."""
    return ModelConfig(
        kind=kind, n_sources=n_sources, gamma=TOY_GAMMA, geometry=TOY_GEOMETRY, stft=TOY_STFT, hidden=TOY_HIDDEN,
        **kwargs
    )


def smooth_toy_model(kind, n_sources=2, seed=0):
    """Double precision toy model whose rectifiers all operate away from zero.

    Convolution and affine biases are lifted to one and the weights shrunk so
    every pre-activation stays positive for inputs in [0, 2*pi).
    """
    model = build_model(toy_model_config(kind, n_sources), seed).double()
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, module in model.named_modules():
            if isinstance(module, nn.Conv2d):
                scale = 0.005
            elif isinstance(module, nn.Linear):
                scale = 0.001 if name == "locnet.output" else 0.05
            else:
                continue
            noise = torch.rand(module.weight.shape, generator=generator, dtype=torch.float64)
            module.weight.copy_((2.0 * noise - 1.0) * scale)
            module.bias.fill_(1.0)
    return model


def toy_features(config, batch=1, frames=TOY_FRAMES, seed=0, dtype=torch.float64):
    """Random network input: phases (B, T, M, F) or IPD features (B, T, D)."""
    generator = torch.Generator().manual_seed(seed)
    if config.input_kind == "phase":
        shape = (batch, frames, config.num_mics, config.num_freqs)
        return 2 * math.pi * torch.rand(shape, generator=generator, dtype=dtype)
    return 2.0 * torch.rand((batch, frames, config.ipd_dim), generator=generator, dtype=dtype) - 1.0


def tiny_simulation_config(**overrides):
    """A few short two-talker mixtures on the three-microphone array with truncated RIRs."""
    settings = dict(
        geometry=TOY_GEOMETRY,
        n_sources=2,
        n_train=4,
        n_dev=2,
        n_test=2,
        duration_range=(0.2, 0.3),
        rir_max_seconds=0.05,
    )
    settings.update(overrides)
    return SimulationConfig(**settings)


TINY_CONFIG_YAML = """
version: 1
stft:
  window_ms: 1.0
  hop_ms: 0.5
  fft_size: 16
simulation:
  geometry: qa10
  n_train: 4
  n_dev: 2
  n_test: 2
  duration_range: [0.2, 0.3]
  rir_max_seconds: 0.05
model:
  kind: mask_split
  gamma: 60.0
  hidden: 8
train:
  loss: sce
  epochs: 1
  batch_size: 2
  crop_seconds: 0.1
"""


def shoebox_room(geometry="uca10", t60=0.5, center=(3.0, 2.5, 1.2)):
    """A 6 x 5 x 3 m room with the array near its middle."""
    return RoomSpec(
        length=6.0, width=5.0, height=3.0, t60=t60, array_center=center, geometry=geometry_by_name(geometry)
    )


def placement_deg(azimuth_deg, distance=1.5):
    """SourcePlacement from an azimuth in degrees."""
    return SourcePlacement(math.radians(azimuth_deg), distance)
