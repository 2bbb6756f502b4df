"""
Simulation of labelled reverberant multi-talker recordings.

Room impulse responses come from the image method for a shoebox room with
fractional-delay image placement; the wall reflection coefficient is
calibrated from Eyring's formula so that the energy decay matches the room's
t60. Sources are placed on the horizontal plane of the array,
either from a directory of WAV files or from a synthetic speech-like
generator, and diffuse noise is added at a sampled or fixed SNR.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve, lfilter

from doalab.audio import atomic_write, read_wav, write_content_addressed
from doalab.config import SimulationConfig
from doalab.dsp import DEFAULT_SAMPLE_RATE, ArrayGeometry, STFTConfig, Waveform, geometry_by_name, stft
from doalab.exceptions import SignalException, SimulationException
from doalab.frontend import steering_vector
from doalab.grid import cyclic_distance_deg

_LOGGER = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"

DEFAULT_TAPS = 40
DECAY_FIT_DB = (-5.0, -35.0)
_CHUNK = 4096
_MAX_PLACEMENT_TRIES = 1000
_NOISE_WAVES = 32


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with a circular array centred at `array_center`."""

    length: float
    width: float
    height: float
    t60: float
    array_center: Tuple[float, float, float]
    geometry: ArrayGeometry
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise SimulationException("room dimensions must be positive")
        if self.t60 <= 0:
            raise SimulationException("t60 must be positive, got {}".format(self.t60))
        for mic in self.mic_positions():
            if not self.contains(mic):
                raise SimulationException("array at {} does not fit into the room".format(self.array_center))

    @property
    def dimensions(self) -> np.ndarray:
        """(length, width, height) in meters."""
        return np.array([self.length, self.width, self.height])

    @property
    def reflection_coefficient(self) -> float:
        """Pressure reflection coefficient of every wall, from Eyring's formula."""
        volume = self.length * self.width * self.height
        surface = 2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
        return math.exp(-0.0805 * volume / (surface * self.t60))

    def mic_positions(self) -> np.ndarray:
        """Microphone coordinates in the room, shape (M, 3)."""
        return self.geometry.mic_positions(self.array_center)

    def contains(self, point, margin=0.0) -> bool:
        """True when `point` lies strictly inside the room, `margin` away from every wall."""
        point = np.asarray(point)
        return bool(np.all(point > margin) and np.all(point < self.dimensions - margin))


@dataclass(frozen=True)
class SourcePlacement:
    """Source position relative to the array centre, on the array's horizontal plane."""

    azimuth: float
    distance: float

    def position(self, room: RoomSpec) -> np.ndarray:
        """Cartesian source position."""
        offset = self.distance * np.array([math.cos(self.azimuth), math.sin(self.azimuth), 0.0])
        return np.asarray(room.array_center, dtype=np.float64) + offset

    @property
    def azimuth_deg(self) -> float:
        """Azimuth in degrees folded into [0, 360)."""
        return float(np.mod(math.degrees(self.azimuth), 360.0))


@dataclass
class RIR:
    """Impulse responses from one source to every microphone, shape (M, L)."""

    responses: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def num_taps(self) -> int:
        """L"""
        return self.responses.shape[1]


def _accumulate(responses, images, gains, mics, sample_rate, speed_of_sound, taps):
    """Add Hann-windowed sinc pulses of every image to the responses in place."""
    cutoff = 0.9 * sample_rate / 2.0
    window_seconds = taps / sample_rate
    num_taps = responses.shape[1]
    distance = np.linalg.norm(images[:, np.newaxis, :] - mics[np.newaxis, :, :], axis=2)
    delay = distance / speed_of_sound * sample_rate
    amplitude = gains[:, np.newaxis] / (4.0 * math.pi * distance)
    offsets = np.arange(-(taps // 2), taps // 2 + 1)
    index = np.floor(delay).astype(np.int64)[..., np.newaxis] + offsets
    lag = (index - delay[..., np.newaxis]) / sample_rate
    window = np.where(np.abs(lag) <= window_seconds / 2, 0.5 * (1.0 + np.cos(2 * math.pi * lag / window_seconds)), 0.0)
    values = amplitude[..., np.newaxis] * window * np.sinc(2 * cutoff * lag) * (2 * cutoff / sample_rate)
    valid = (index >= 0) & (index < num_taps)
    for mic in range(mics.shape[0]):
        keep = valid[:, mic, :]
        responses[mic] += np.bincount(index[:, mic, :][keep], weights=values[:, mic, :][keep], minlength=num_taps)


def _tail_energy(energy, sample_rate, bin_seconds=0.01) -> float:
    """Energy beyond the end of an envelope, extrapolated from the exponential decay of its second half."""
    width = max(int(bin_seconds * sample_rate), 1)
    bins = energy[: energy.size // width * width].reshape(-1, width).sum(axis=1)
    late = np.arange(bins.size // 2, bins.size)
    late = late[bins[late] > 0]
    if late.size < 2:
        return 0.0
    seconds = width / sample_rate
    slope, intercept = np.polyfit((late + 0.5) * seconds, np.log(bins[late] / seconds), 1)
    if slope >= 0:
        return math.inf
    return math.exp(intercept + slope * energy.size / sample_rate) / -slope


def decay_time(energy, sample_rate: int, fit_db: Tuple[float, float] = DECAY_FIT_DB) -> float:
    """Reverberation time in seconds of an energy envelope with one value per sample.

    The envelope is integrated backwards, with the energy past its end
    extrapolated from the decay of its second half, and a line fitted to the
    decay curve between the two `fit_db` levels is extended to -60 dB.
    """
    energy = np.asarray(energy, dtype=np.float64)
    if not energy.sum() > 0:
        raise SignalException("cannot measure the decay of a silent response")
    tail = _tail_energy(energy, sample_rate)
    if math.isinf(tail):
        return math.inf
    remaining = np.cumsum(energy[::-1])[::-1] + tail
    with np.errstate(divide="ignore"):
        levels = 10.0 * np.log10(remaining / remaining[0])
    upper, lower = fit_db
    fit = np.flatnonzero((levels <= upper) & (levels >= lower))
    if fit.size < 2:
        # the fit range is crossed within one sample, or never reached
        return 0.0 if levels[-1] < lower else math.inf
    slope, _ = np.polyfit(fit / sample_rate, levels[fit], 1)
    return -60.0 / slope if slope < 0 else math.inf


def _image_sources(position, dims, center, reach, max_order=None):
    """Image positions (K, 3) and reflection counts (K,) of a shoebox source within `reach` of `center`."""
    orders = np.ceil(reach / (2 * dims)).astype(int) + 1
    if max_order is not None:
        orders = np.minimum(orders, max_order)
    shifts = np.stack(np.meshgrid(*[np.arange(-o, o + 1) for o in orders], indexing="ij"), axis=-1).reshape(-1, 3)
    images, reflections = [], []
    for parity in itertools.product((0, 1), repeat=3):
        parity = np.asarray(parity)
        candidates = (1 - 2 * parity) * position + 2 * shifts * dims
        counts = np.abs(shifts - parity).sum(axis=1) + np.abs(shifts).sum(axis=1)
        keep = np.linalg.norm(candidates - center, axis=1) <= reach
        if max_order is not None:
            keep &= counts <= max_order
        images.append(candidates[keep])
        reflections.append(counts[keep])
    return np.concatenate(images), np.concatenate(reflections)


def calibrated_reflection(room: RoomSpec, source: SourcePlacement) -> float:
    """Wall reflection coefficient whose image-method energy decay matches the room's t60.

    A shoebox with uniform walls decays more slowly than Eyring's diffuse-field
    formula predicts, so the coefficient is solved for, starting from Eyring's
    value, until `decay_time` of the image energy arriving at the array centre
    equals t60. Falls back to Eyring's value when no coefficient in range fits.
    """
    rate, speed = room.sample_rate, room.geometry.speed_of_sound
    center = np.asarray(room.array_center, dtype=np.float64)
    horizon = int(math.ceil(room.t60 * rate))
    images, reflections = _image_sources(source.position(room), room.dimensions, center, room.t60 * speed)
    distance = np.maximum(np.linalg.norm(images - center, axis=1), speed / rate)
    arrival = np.minimum((distance / speed * rate).astype(np.int64), horizon - 1)
    spreading = distance**-2.0

    def mismatch(log_absorption):
        weights = spreading * np.exp(-2.0 * math.exp(log_absorption) * reflections)
        measured = decay_time(np.bincount(arrival, weights=weights, minlength=horizon), rate)
        return math.log(min(max(measured, 1e-6), 1e6) / room.t60)

    eyring = -math.log(room.reflection_coefficient)
    low, high = math.log(eyring / 4.0), math.log(eyring * 8.0)
    if mismatch(low) < 0 or mismatch(high) > 0:
        _LOGGER.warning("No reflection coefficient gives t60 %.3f s; using Eyring's", room.t60)
        return room.reflection_coefficient
    beta = math.exp(-math.exp(brentq(mismatch, low, high, xtol=1e-3)))
    _LOGGER.debug("Calibrated reflection coefficient %.4f (Eyring %.4f)", beta, room.reflection_coefficient)
    return beta


def image_method_rir(
    room: RoomSpec,
    source: SourcePlacement,
    max_order: Optional[int] = None,
    length_seconds: Optional[float] = None,
    taps: int = DEFAULT_TAPS,
) -> RIR:
    """Shoebox image-method impulse responses from `source` to every microphone.

    Images up to `max_order` reflections are used (all images reaching the
    microphones within the response length when None); `max_order=0` gives the
    free-field response. Walls reflect with `calibrated_reflection`. The
    response lasts `length_seconds`, by default t60, and always covers the
    direct path.
    """
    mics = room.mic_positions()
    position = source.position(room)
    if not room.contains(position):
        raise SimulationException("source at {} lies outside the room".format(np.round(position, 3).tolist()))
    rate = room.sample_rate
    speed = room.geometry.speed_of_sound
    beta = 0.0 if max_order == 0 else calibrated_reflection(room, source)
    if length_seconds is None:
        length_seconds = room.t60
    direct = np.linalg.norm(mics - position, axis=1).max() / speed
    num_taps = int(math.ceil(max(length_seconds * rate, direct * rate + taps)))

    # images beyond this distance from the array only land past the last tap
    reach = (num_taps + taps) / rate * speed + room.geometry.radius
    center = np.asarray(room.array_center, dtype=np.float64)
    images, reflections = _image_sources(position, room.dimensions, center, reach, max_order)
    gains = np.power(beta, reflections)
    keep = gains > 0
    images, gains = images[keep], gains[keep]
    responses = np.zeros((mics.shape[0], num_taps))
    for start in range(0, images.shape[0], _CHUNK):
        _accumulate(responses, images[start : start + _CHUNK], gains[start : start + _CHUNK], mics, rate, speed, taps)
    _LOGGER.debug("RIR with %d taps, reflection coefficient %.3f", num_taps, beta)
    return RIR(responses, rate)


def synthetic_speech(rng: np.random.Generator, num_samples: int, sample_rate: int = DEFAULT_SAMPLE_RATE):
    """Speech-like burst: a gliding harmonic voice through three formant resonators,
    mixed with a little breath noise and gated at a syllabic rate. Unit RMS."""
    time = np.arange(num_samples) / sample_rate
    pitch = rng.uniform(90.0, 250.0) * (1.0 + 0.06 * np.sin(2 * math.pi * rng.uniform(1.5, 4.0) * time
                                                            + rng.uniform(0, 2 * math.pi)))
    phase = 2 * math.pi * np.cumsum(pitch) / sample_rate
    voice = np.zeros(num_samples)
    for harmonic in range(1, int(4000.0 / pitch.max()) + 1):
        voice += np.sin(harmonic * phase) / harmonic
    voice += 0.1 * rng.standard_normal(num_samples)
    for low, high in ((300.0, 800.0), (900.0, 2200.0), (2300.0, 3200.0)):
        centre = rng.uniform(low, high)
        radius = math.exp(-math.pi * 120.0 / sample_rate)
        voice = lfilter([1.0 - radius], [1.0, -2 * radius * math.cos(2 * math.pi * centre / sample_rate), radius**2],
                        voice)

    gate = np.zeros(num_samples)
    start = int(rng.uniform(0.0, 0.05) * sample_rate)
    while start < num_samples:
        length = int(rng.uniform(0.12, 0.3) * sample_rate)
        stop = min(start + length, num_samples)
        gate[start:stop] = np.hanning(length)[: stop - start]
        start = stop + int(rng.uniform(0.03, 0.12) * sample_rate)
    signal = voice * gate
    power = np.sqrt(np.mean(signal**2))
    if power == 0:
        raise SimulationException("synthetic source came out silent")
    return signal / power


def _speech_shaped_noise(rng, num_samples, sample_rate):
    spectrum = np.fft.rfft(rng.standard_normal(num_samples))
    freqs = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    return spectrum / np.sqrt(1.0 + (freqs / 500.0) ** 2), freqs


def isotropic_noise(
    rng: np.random.Generator,
    geometry: ArrayGeometry,
    num_samples: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    num_waves: int = _NOISE_WAVES,
) -> Waveform:
    """Cylindrically isotropic noise: independent speech-shaped plane waves from evenly spread azimuths."""
    offset = rng.uniform(0.0, 2 * math.pi / num_waves)
    total = np.zeros((geometry.num_mics, num_samples // 2 + 1), dtype=np.complex128)
    for wave in range(num_waves):
        spectrum, freqs = _speech_shaped_noise(rng, num_samples, sample_rate)
        steer = steering_vector(offset + 2 * math.pi * wave / num_waves, geometry, freqs)
        total += steer.T * spectrum
    samples = np.fft.irfft(total, n=num_samples, axis=1)
    return Waveform(samples / np.sqrt(np.mean(samples**2)), sample_rate)


def _wav_files(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise SimulationException("audio directory {} does not exist".format(directory))
    return sorted(path for path in directory.rglob("*") if path.suffix.lower() == ".wav")


def _segment(rng, samples, num_samples):
    """Random excerpt of `num_samples`, tiling short recordings."""
    if samples.shape[-1] < num_samples:
        reps = int(math.ceil(num_samples / samples.shape[-1]))
        samples = np.tile(samples, (1,) * (samples.ndim - 1) + (reps,))
    start = int(rng.integers(0, samples.shape[-1] - num_samples + 1))
    return samples[..., start : start + num_samples]


@dataclass(frozen=True)
class SourcePool:
    """Dry source signals: WAV files under `directory`, or synthetic speech when None."""

    directory: Optional[str] = None
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def draw(self, rng: np.random.Generator, count: int, num_samples: int) -> List[np.ndarray]:
        """`count` distinct mono signals of `num_samples`."""
        if self.directory is None:
            return [synthetic_speech(rng, num_samples, self.sample_rate) for _ in range(count)]
        files = _wav_files(self.directory)
        if len(files) < count:
            raise SimulationException(
                "source pool {} holds {} WAV files, {} needed".format(self.directory, len(files), count)
            )
        signals = []
        for choice in rng.choice(len(files), size=count, replace=False):
            samples = read_wav(files[choice], self.sample_rate).samples[0]
            signals.append(_segment(rng, samples, num_samples))
        return signals


@dataclass(frozen=True)
class NoisePool:
    """Multichannel noise: WAV recordings matching the array, or synthetic isotropic noise when None."""

    directory: Optional[str] = None
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def draw(self, rng: np.random.Generator, geometry: ArrayGeometry, num_samples: int) -> Waveform:
        """One noise excerpt with one channel per microphone."""
        if self.directory is None:
            return isotropic_noise(rng, geometry, num_samples, self.sample_rate)
        files = _wav_files(self.directory)
        if not files:
            raise SimulationException("noise directory {} holds no WAV files".format(self.directory))
        noise = read_wav(files[int(rng.integers(len(files)))], self.sample_rate)
        if noise.num_channels != geometry.num_mics:
            raise SimulationException(
                "noise has {} channels but array {} has {}".format(noise.num_channels, geometry.name, geometry.num_mics)
            )
        return Waveform(_segment(rng, noise.samples, num_samples), self.sample_rate)


@dataclass
class MixtureExample:
    """A simulated recording with everything needed to score localisation and separation."""

    mixture: Waveform
    clean_images: List[Waveform]
    doas: np.ndarray
    snr_db: float
    room: RoomSpec
    noise: Optional[Waveform] = None
    placements: List[SourcePlacement] = field(default_factory=list)

    @property
    def n_sources(self) -> int:
        """N"""
        return len(self.clean_images)

    @property
    def doas_deg(self) -> List[float]:
        """Labels in degrees folded into [0, 360)."""
        return [float(v) for v in np.mod(np.degrees(self.doas), 360.0)]


NoiseArgument = Union[None, Waveform, Callable[[int], Waveform]]


def _power(samples):
    return float(np.mean(np.asarray(samples) ** 2))


def synthesize_mixture(
    sources: Sequence,
    room: RoomSpec,
    placements: Sequence[SourcePlacement],
    noise: NoiseArgument,
    snr_db: float,
    max_order: Optional[int] = None,
    rir_seconds: Optional[float] = None,
) -> MixtureExample:
    """Convolve each dry source with its RIR and add noise scaled to `snr_db`.

    `noise` is a multichannel Waveform, a callable returning one for a given
    number of samples, or None. With `snr_db = inf` no noise is added. The SNR
    relates the power of the summed source images to the noise power, both
    averaged over channels.
    """
    if len(sources) < 1:
        raise SimulationException("a mixture needs at least one source")
    if len(sources) != len(placements):
        raise SimulationException("{} sources but {} placements".format(len(sources), len(placements)))
    dry = []
    for index, source in enumerate(sources):
        if isinstance(source, Waveform):
            if source.num_channels != 1:
                raise SimulationException("source {} is not mono".format(index))
            source = source.samples[0]
        dry.append(np.asarray(source, dtype=np.float64))
    num_samples = dry[0].shape[-1]
    if any(source.shape[-1] != num_samples for source in dry):
        raise SignalException("all sources must have the same length")
    for index, source in enumerate(dry):
        if _power(source) == 0:
            raise SimulationException("source {} is silent".format(index))

    images = []
    for source, placement in zip(dry, placements):
        rir = image_method_rir(room, placement, max_order=max_order, length_seconds=rir_seconds)
        image = fftconvolve(rir.responses, source[np.newaxis, :], axes=1)[:, :num_samples]
        images.append(Waveform(image, room.sample_rate))
    speech = np.sum([image.samples for image in images], axis=0)

    scaled_noise = None
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise SimulationException("invalid SNR {}".format(snr_db))
    if not math.isinf(snr_db):
        if noise is None:
            raise SimulationException("a finite SNR needs a noise signal")
        noise = noise(num_samples) if callable(noise) else noise
        if noise.num_channels != speech.shape[0] or noise.num_samples < num_samples:
            raise SimulationException("noise must have {} channels and at least {} samples".format(
                speech.shape[0], num_samples))
        noise_samples = noise.samples[:, :num_samples]
        noise_power = _power(noise_samples)
        if noise_power == 0:
            raise SimulationException("noise signal is silent")
        gain = math.sqrt(_power(speech) / (noise_power * 10.0 ** (snr_db / 10.0)))
        scaled_noise = Waveform(gain * noise_samples, room.sample_rate)
        speech = speech + scaled_noise.samples

    return MixtureExample(
        mixture=Waveform(speech, room.sample_rate),
        clean_images=images,
        doas=np.mod(np.array([p.azimuth for p in placements]), 2 * math.pi),
        snr_db=snr_db,
        room=room,
        noise=scaled_noise,
        placements=list(placements),
    )


def ideal_binary_mask(clean_images: Sequence[np.ndarray]) -> np.ndarray:
    """Oracle masks (N, T, F): each bin belongs to the source with the largest magnitude, ties to the first."""
    if len(clean_images) < 2:
        raise SignalException("ideal binary masks need at least two sources")
    magnitudes = np.abs(np.stack([np.asarray(image) for image in clean_images]))
    winner = np.argmax(magnitudes, axis=0)
    return (winner[np.newaxis] == np.arange(len(clean_images))[:, np.newaxis, np.newaxis]).astype(np.float64)


def oracle_masks(example: MixtureExample, config: STFTConfig = STFTConfig(), ref_mic: int = 2) -> np.ndarray:
    """Ideal binary masks from the clean images at the 1-based reference microphone."""
    return ideal_binary_mask([stft(image.channel(ref_mic - 1), config).channel(0) for image in example.clean_images])


def sample_room(rng: np.random.Generator, config: SimulationConfig, geometry: ArrayGeometry) -> RoomSpec:
    """Uniformly sampled room size, t60 and array position."""
    dims = rng.uniform(config.room_min, config.room_max)
    margin = config.array_margin
    if np.any(dims[:2] <= 2 * margin):
        raise SimulationException("room {} too small for an array margin of {} m".format(dims.tolist(), margin))
    center = (
        float(rng.uniform(margin, dims[0] - margin)),
        float(rng.uniform(margin, dims[1] - margin)),
        float(rng.uniform(*config.array_height_range)),
    )
    return RoomSpec(
        length=float(dims[0]),
        width=float(dims[1]),
        height=float(dims[2]),
        t60=float(rng.uniform(*config.t60_range)),
        array_center=center,
        geometry=geometry,
        sample_rate=config.sample_rate,
    )


def sample_placements(rng: np.random.Generator, room: RoomSpec, config: SimulationConfig) -> List[SourcePlacement]:
    """Draw `n_sources` placements inside the room, pairwise at least `min_separation_deg` apart."""
    placements = []
    for _ in range(config.n_sources):
        for _ in range(_MAX_PLACEMENT_TRIES):
            candidate = SourcePlacement(
                azimuth=float(rng.uniform(0.0, 2 * math.pi)), distance=float(rng.uniform(*config.distance_range))
            )
            if not room.contains(candidate.position(room), config.source_wall_margin):
                continue
            separations = [cyclic_distance_deg(candidate.azimuth_deg, p.azimuth_deg) for p in placements]
            if all(sep >= config.min_separation_deg for sep in separations):
                placements.append(candidate)
                break
        else:
            raise SimulationException("no valid source placement found after {} tries".format(_MAX_PLACEMENT_TRIES))
    return placements


@dataclass
class ManifestRecord:
    """One mixture of a dataset; paths are relative to the dataset root."""

    id: str
    split: str
    mixture: str
    images: List[str]
    doas_deg: List[float]
    snr_db: Optional[float]
    geometry: str
    t60: float
    room: List[float]
    array_center: List[float]
    distances: List[float]
    noise: Optional[str] = None

    def to_json(self) -> str:
        """Canonical JSON line."""
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        """Parse one manifest line."""
        return cls(**json.loads(line))

    @property
    def snr(self) -> float:
        """SNR in dB, inf for noise-free mixtures."""
        return math.inf if self.snr_db is None else self.snr_db


@dataclass
class DatasetManifest:
    """All records of a generated dataset rooted at `root`."""

    root: Path
    records: List[ManifestRecord] = field(default_factory=list)

    @property
    def path(self) -> Path:
        """Location of the JSON-lines file."""
        return Path(self.root) / MANIFEST_NAME

    def split(self, name: str) -> List[ManifestRecord]:
        """Records of one split in manifest order."""
        return [record for record in self.records if record.split == name]

    def write(self):
        """Write the manifest atomically."""
        with atomic_write(self.path, "w", encoding="utf-8", newline="\n") as stream:
            for record in self.records:
                stream.write(record.to_json() + "\n")
        _LOGGER.info("Wrote %d records to %s", len(self.records), self.path)

    @classmethod
    def read(cls, root) -> "DatasetManifest":
        """Load `root/manifest.jsonl`; `root` may also name the file itself."""
        root = Path(root)
        if root.is_file():
            root = root.parent
        path = root / MANIFEST_NAME
        if not path.exists():
            raise FileNotFoundError("no manifest at {}".format(path))
        with open(path, encoding="utf-8") as stream:
            try:
                records = [ManifestRecord.from_json(line) for line in stream if line.strip()]
            except (TypeError, ValueError) as err:
                raise SimulationException("malformed manifest {}: {}".format(path, err)) from err
        return cls(root, records)

    def validate(self):
        """Check that every referenced file exists and labels lie in [0, 360)."""
        for record in self.records:
            paths = [record.mixture] + list(record.images) + ([record.noise] if record.noise else [])
            for relative in paths:
                if not (Path(self.root) / relative).exists():
                    raise SimulationException("{}: missing file {}".format(record.id, relative))
            if any(not 0.0 <= doa < 360.0 for doa in record.doas_deg):
                raise SimulationException("{}: labels outside [0, 360)".format(record.id))

    def load(self, record: ManifestRecord, with_images=True) -> MixtureExample:
        """Read the audio of a record back into a MixtureExample."""
        geometry = geometry_by_name(record.geometry)
        room = RoomSpec(
            length=record.room[0],
            width=record.room[1],
            height=record.room[2],
            t60=record.t60,
            array_center=tuple(record.array_center),
            geometry=geometry,
        )
        mixture = read_wav(Path(self.root) / record.mixture)
        images = [read_wav(Path(self.root) / path) for path in record.images] if with_images else []
        noise = read_wav(Path(self.root) / record.noise) if record.noise else None
        doas = np.radians(np.asarray(record.doas_deg))
        return MixtureExample(
            mixture=mixture,
            clean_images=images,
            doas=doas,
            snr_db=record.snr,
            room=room,
            noise=noise,
            placements=[SourcePlacement(float(a), float(d)) for a, d in zip(doas, record.distances)],
        )


def _generate_example(task):
    """Worker: simulate one example and store its audio; returns its manifest record."""
    config, seed, index, split, example_id, root = task
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    geometry = geometry_by_name(config.geometry)
    room = sample_room(rng, config, geometry)
    placements = sample_placements(rng, room, config)
    num_samples = int(round(rng.uniform(*config.duration_range) * config.sample_rate))
    sources = SourcePool(config.source_dir, config.sample_rate).draw(rng, config.n_sources, num_samples)
    snr_db = config.fixed_snr_db if config.snr_is_fixed() else float(rng.uniform(*config.snr_range))
    noise = NoisePool(config.noise_dir, config.sample_rate).draw(rng, geometry, num_samples)
    rir_seconds = None if config.rir_max_seconds is None else min(room.t60, config.rir_max_seconds)
    example = synthesize_mixture(sources, room, placements, noise, snr_db, rir_seconds=rir_seconds)
    noise_path = None
    if config.keep_noise and example.noise is not None:
        noise_path = write_content_addressed(root, example.noise)
    record = ManifestRecord(
        id=example_id,
        split=split,
        mixture=write_content_addressed(root, example.mixture),
        images=[write_content_addressed(root, image) for image in example.clean_images],
        doas_deg=example.doas_deg,
        snr_db=None if math.isinf(snr_db) else float(snr_db),
        geometry=config.geometry,
        t60=room.t60,
        room=[room.length, room.width, room.height],
        array_center=list(room.array_center),
        distances=[p.distance for p in placements],
        noise=noise_path,
    )
    _LOGGER.debug("Generated %s (t60 %.2f s, doas %s)", example_id, room.t60, record.doas_deg)
    return record


def dataset_generate(config: SimulationConfig, seed: int, root) -> DatasetManifest:
    """Simulate the train, dev and test splits under `root` and write the manifest.

    Example k (counted over all splits) draws everything from a generator seeded
    with (seed, k), so output does not depend on the worker count.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tasks = []
    for split, count in config.split_sizes:
        for index in range(count):
            tasks.append((config, seed, len(tasks), split, "{}-{:05d}".format(split, index), str(root)))
    _LOGGER.info("Simulating %d mixtures into %s with %d worker(s)", len(tasks), root, config.workers)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_generate_example, tasks, chunksize=4))
    else:
        records = [_generate_example(task) for task in tasks]
    manifest = DatasetManifest(root, records)
    manifest.write()
    return manifest
