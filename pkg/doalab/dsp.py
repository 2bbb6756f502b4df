"""
Signal processing primitives shared by the simulator, the estimators and the
beamforming frontend.

Spectrograms are stored as complex arrays indexed (frame, channel, bin).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
from typing import Optional, Sequence, Tuple

import librosa
import numpy as np

from doalab.exceptions import ConfigException, SignalException

_LOGGER = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
SPEED_OF_SOUND = 343.0

# 1-based microphone pairs used for IPD features
EIGHT_MIC_PAIRS = ((1, 5), (2, 6), (3, 7), (4, 8), (1, 3), (3, 5), (5, 7), (7, 1))
THREE_MIC_PAIRS = ((1, 2), (2, 3), (1, 3))

_MVN_MIN_STD = 1e-8
_LOG_MEL_FLOOR = 1e-10


@dataclass
class Waveform:
    """Multichannel time signal, shape (channels, samples)."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2:
            raise SignalException("waveform must be 1-D or 2-D, got shape {}".format(samples.shape))
        if self.sample_rate <= 0:
            raise SignalException("sample rate must be positive, got {}".format(self.sample_rate))
        self.samples = samples

    @property
    def num_channels(self) -> int:
        """Number of channels."""
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        """Number of samples per channel."""
        return self.samples.shape[1]

    def channel(self, index: int) -> "Waveform":
        """Return a single channel as a mono waveform."""
        return Waveform(self.samples[index : index + 1], self.sample_rate)


@dataclass(frozen=True)
class STFTConfig:
    """Analysis parameters; the defaults give a 400 sample Hann window, 160 sample hop and 257 bins."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigException("sample_rate must be positive")
        if self.hop_length <= 0 or self.hop_length > self.win_length:
            raise ConfigException(
                "hop ({} samples) must be positive and not exceed the window ({} samples)".format(
                    self.hop_length, self.win_length
                )
            )
        if self.fft_size < self.win_length:
            raise ConfigException(
                "fft_size {} is shorter than the window ({} samples)".format(self.fft_size, self.win_length)
            )

    @property
    def win_length(self) -> int:
        """Window length in samples."""
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        """Frame shift in samples."""
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def n_freqs(self) -> int:
        """Number of one-sided frequency bins."""
        return self.fft_size // 2 + 1

    def frequencies(self) -> np.ndarray:
        """Centre frequency of every bin in Hz."""
        return np.arange(self.n_freqs) * self.sample_rate / self.fft_size


@dataclass
class MultichannelSpectrogram:
    """Complex STFT with shape (frames, channels, bins)."""

    data: np.ndarray
    config: STFTConfig = field(default_factory=STFTConfig)
    num_samples: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, np.newaxis, :]
        if data.ndim != 3:
            raise SignalException("spectrogram must have shape (T, M, F), got {}".format(data.shape))
        if data.shape[2] != self.config.n_freqs:
            raise SignalException(
                "spectrogram has {} bins but the config implies {}".format(data.shape[2], self.config.n_freqs)
            )
        self.data = data.astype(np.complex128, copy=False)

    @property
    def num_frames(self) -> int:
        """T"""
        return self.data.shape[0]

    @property
    def num_channels(self) -> int:
        """M"""
        return self.data.shape[1]

    @property
    def num_freqs(self) -> int:
        """F"""
        return self.data.shape[2]

    def channel(self, index: int) -> np.ndarray:
        """Single channel as a (T, F) complex array."""
        return self.data[:, index, :]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform circular array (or a subset of one) centred on the array origin.

    Pairs are stored 0-based.
    """

    name: str
    radius: float
    mic_angles: Tuple[float, ...]
    pair_list: Tuple[Tuple[int, int], ...]
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if len(self.mic_angles) < 2:
            raise ConfigException("array {} needs at least two microphones".format(self.name))
        if self.radius <= 0:
            raise ConfigException("array radius must be positive")
        for angle in self.mic_angles:
            if not 0.0 <= angle < 2 * math.pi:
                raise ConfigException("microphone angle {} outside [0, 2pi)".format(angle))
        for first, second in self.pair_list:
            if not (0 <= first < self.num_mics and 0 <= second < self.num_mics) or first == second:
                raise ConfigException("invalid microphone pair ({}, {})".format(first, second))

    @property
    def num_mics(self) -> int:
        """M"""
        return len(self.mic_angles)

    @property
    def num_pairs(self) -> int:
        """I"""
        return len(self.pair_list)

    def mic_positions(self, center: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
        """Cartesian microphone positions, shape (M, 3)."""
        angles = np.asarray(self.mic_angles)
        offsets = np.stack(
            [self.radius * np.cos(angles), self.radius * np.sin(angles), np.zeros_like(angles)], axis=1
        )
        return np.asarray(center, dtype=np.float64)[np.newaxis, :] + offsets

    def subset(self, name: str, mics: Sequence[int], pairs: Sequence[Tuple[int, int]]) -> "ArrayGeometry":
        """Geometry made of some of the microphones; pairs are 1-based into the subset."""
        return ArrayGeometry(
            name=name,
            radius=self.radius,
            mic_angles=tuple(self.mic_angles[m] for m in mics),
            pair_list=tuple((a - 1, b - 1) for a, b in pairs),
            speed_of_sound=self.speed_of_sound,
        )


def uniform_circular_array(name, radius, num_mics, pairs=EIGHT_MIC_PAIRS, speed_of_sound=SPEED_OF_SOUND):
    """Build a UCA with microphone m at angle 2*pi*m/M; pairs are 1-based."""
    return ArrayGeometry(
        name=name,
        radius=radius,
        mic_angles=tuple(2 * math.pi * m / num_mics for m in range(num_mics)),
        pair_list=tuple((a - 1, b - 1) for a, b in pairs),
        speed_of_sound=speed_of_sound,
    )


def geometry_by_name(name: str) -> ArrayGeometry:
    """Resolve one of the named arrays: uca5, uca10 or qa10."""
    key = name.lower().replace("-", "").replace("_", "")
    if key == "uca5":
        return uniform_circular_array("uca5", 0.05, 8)
    if key == "uca10":
        return uniform_circular_array("uca10", 0.10, 8)
    if key == "qa10":
        return uniform_circular_array("uca10", 0.10, 8).subset("qa10", (0, 1, 2), THREE_MIC_PAIRS)
    raise ConfigException("unknown array geometry: {}".format(name))


def stft(waveform: Waveform, config: STFTConfig = STFTConfig()) -> MultichannelSpectrogram:
    """Hann-windowed STFT of every channel, frames centred on multiples of the hop."""
    if waveform.num_samples == 0:
        raise SignalException("cannot analyse an empty waveform")
    if waveform.sample_rate != config.sample_rate:
        raise SignalException(
            "waveform rate {} Hz does not match STFT rate {} Hz".format(waveform.sample_rate, config.sample_rate)
        )
    spec = librosa.stft(
        waveform.samples,
        n_fft=config.fft_size,
        hop_length=config.hop_length,
        win_length=config.win_length,
        window=config.window,
        center=True,
        pad_mode="constant",
    )
    # (M, F, T) -> (T, M, F)
    return MultichannelSpectrogram(np.transpose(spec, (2, 0, 1)), config, waveform.num_samples)


def istft(spectrogram: MultichannelSpectrogram, length: Optional[int] = None) -> Waveform:
    """Weighted overlap-add synthesis inverting `stft`.

    Without an explicit `length` the analysed signal length is used, or, for
    spectrograms built directly, the span covered by every frame's window.
    """
    config = spectrogram.config
    if length is None:
        length = spectrogram.num_samples
    if length is None:
        length = (spectrogram.num_frames - 1) * config.hop_length + config.win_length
    samples = librosa.istft(
        np.transpose(spectrogram.data, (1, 2, 0)),
        hop_length=config.hop_length,
        win_length=config.win_length,
        n_fft=config.fft_size,
        window=config.window,
        center=True,
        length=length,
    )
    return Waveform(samples, config.sample_rate)


def phase_spectrum(spectrogram: MultichannelSpectrogram) -> np.ndarray:
    """Phase of every bin wrapped into [0, 2*pi), shape (T, M, F)."""
    phase = np.mod(np.angle(spectrogram.data), 2 * np.pi)
    # np.mod may round tiny negative angles up to exactly 2*pi
    phase[phase >= 2 * np.pi] = 0.0
    return phase


def ipd_features(spectrogram: MultichannelSpectrogram, geometry: ArrayGeometry) -> np.ndarray:
    """Inter-microphone phase differences plus the channel-1 magnitude.

    For every pair the complex feature (cos + j sin of the phase of y_i1 / y_i2)
    is scaled by 1/M, its real and imaginary parts are laid out pair by pair,
    and |Y_1| is appended. Output shape (T, 2*I*F + F).
    """
    if not geometry.pair_list:
        raise ConfigException("geometry {} has an empty pair list".format(geometry.name))
    if spectrogram.num_channels != geometry.num_mics:
        raise SignalException(
            "spectrogram has {} channels, geometry {} has {}".format(
                spectrogram.num_channels, geometry.name, geometry.num_mics
            )
        )
    data = spectrogram.data
    scale = 1.0 / geometry.num_mics
    parts = []
    for first, second in geometry.pair_list:
        cross = data[:, first, :] * np.conj(data[:, second, :])
        # phase of 0/0 or x/0 is defined as 0
        angle = np.where(np.abs(data[:, second, :]) > 0, np.angle(cross), 0.0)
        parts.append(scale * np.cos(angle))
        parts.append(scale * np.sin(angle))
    parts.append(np.abs(data[:, 0, :]))
    return np.concatenate(parts, axis=1)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int) -> np.ndarray:
    """HTK-scale triangular filters spanning 0 Hz to Nyquist, shape (n_mels, F)."""
    return librosa.filters.mel(
        sr=sample_rate, n_fft=fft_size, n_mels=n_mels, fmin=0.0, fmax=sample_rate / 2.0, htk=True, norm=None
    )


def logmel_mvn(spectrum: np.ndarray, config: STFTConfig = STFTConfig(), n_mels: int = 80) -> np.ndarray:
    """Log mel filterbank features with utterance mean-variance normalisation.

    `spectrum` is a single-channel complex (T, F) spectrogram. Dimensions with
    zero variance come out as zeros.
    """
    spectrum = np.asarray(spectrum)
    if spectrum.ndim != 2 or spectrum.shape[1] != config.n_freqs:
        raise SignalException("expected a (T, {}) spectrogram, got {}".format(config.n_freqs, spectrum.shape))
    if spectrum.shape[0] < 2:
        raise SignalException("mean-variance normalisation needs at least two frames")
    power = np.abs(spectrum) ** 2
    mel = power @ mel_filterbank(config.sample_rate, config.fft_size, n_mels).T
    logmel = np.log(np.maximum(mel, _LOG_MEL_FLOOR))
    mean = logmel.mean(axis=0, keepdims=True)
    std = logmel.std(axis=0, keepdims=True)
    normalised = (logmel - mean) / np.maximum(std, _MVN_MIN_STD)
    return np.where(std < _MVN_MIN_STD, 0.0, normalised)
