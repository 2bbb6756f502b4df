"""Feature extraction and torch datasets over a simulated manifest."""

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from doalab.audio import read_wav
from doalab.dsp import ArrayGeometry, Waveform, geometry_by_name, ipd_features, phase_spectrum, stft
from doalab.exceptions import SignalException
from doalab.neural.losses import fixed_order_targets, multi_hot, target_vector
from doalab.neural.models import ModelConfig
from doalab.sim import ManifestRecord

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureExtractor:
    """Network input for a waveform: phase (T, M, F) or IPD features (T, 2*I*F + F)."""

    config: ModelConfig

    @property
    def geometry(self) -> ArrayGeometry:
        """Array the model was built for."""
        return geometry_by_name(self.config.geometry)

    def __call__(self, waveform: Waveform) -> np.ndarray:
        if waveform.num_channels != self.config.num_mics:
            raise SignalException(
                "recording has {} channels, the {} array has {}".format(
                    waveform.num_channels, self.config.geometry, self.config.num_mics
                )
            )
        spectrogram = stft(waveform, self.config.stft)
        if self.config.input_kind == "ipd":
            return ipd_features(spectrogram, self.geometry)
        return phase_spectrum(spectrogram)


def make_target(config: ModelConfig, loss_kind: str, doas_deg: Sequence[float]) -> np.ndarray:
    """Training target for one example.

    MLC gets one multi-hot vector (G,); splitting models get one row per
    source (N, G) with sources in ascending angle order.
    """
    grid = config.grid
    ordered = fixed_order_targets(doas_deg)
    indices = grid.class_index(ordered)
    if config.kind == "mlc":
        return multi_hot(indices, grid.size)
    return np.stack([target_vector(loss_kind, int(index), grid.size) for index in indices])


class ManifestDataset(Dataset):
    """Examples of one split; audio is read and featurised on access.

    With `crop_seconds` set, every access returns a crop at an offset drawn
    from (seed, epoch, index), so crops change per epoch but not per run.
    """

    def __init__(
        self,
        root,
        records: List[ManifestRecord],
        config: ModelConfig,
        loss_kind: str,
        crop_seconds: Optional[float] = None,
        seed: int = 0,
    ):
        self.root = Path(root)
        self.records = records
        self.config = config
        self.loss_kind = loss_kind
        self.extractor = FeatureExtractor(config)
        self.crop_samples = None if crop_seconds is None else int(round(crop_seconds * config.stft.sample_rate))
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        """Select the crop offsets of `epoch`."""
        self.epoch = epoch

    def __len__(self):
        return len(self.records)

    def waveform(self, index: int) -> Waveform:
        """Mixture audio of example `index`, cropped if configured."""
        mixture = read_wav(self.root / self.records[index].mixture, self.config.stft.sample_rate)
        if self.crop_samples is None or mixture.num_samples <= self.crop_samples:
            return mixture
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.epoch, index]))
        start = int(rng.integers(0, mixture.num_samples - self.crop_samples + 1))
        return Waveform(mixture.samples[:, start : start + self.crop_samples], mixture.sample_rate)

    def __getitem__(self, index: int):
        features = self.extractor(self.waveform(index))
        target = make_target(self.config, self.loss_kind, self.records[index].doas_deg)
        return torch.as_tensor(features, dtype=torch.float32), torch.as_tensor(target, dtype=torch.float32)


def collate_shortest(batch):
    """Stack a batch, truncating every item to the shortest number of frames."""
    frames = min(features.shape[0] for features, _ in batch)
    features = torch.stack([item[:frames] for item, _ in batch])
    targets = torch.stack([target for _, target in batch])
    return features, targets
