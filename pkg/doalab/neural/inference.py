"""Turning posteriors into azimuths, for whole utterances or by chunked median."""

import logging

import numpy as np
import torch

from doalab.dsp import Waveform
from doalab.grid import cyclic_distance_deg
from doalab.neural.data import FeatureExtractor
from doalab.neural.models import DoaModel
from doalab.subspace import peak_indices

_LOGGER = logging.getLogger(__name__)

CHUNK_MS = 100.0
CHUNK_OVERLAP = 0.5


def decode(posterior: np.ndarray, model_kind: str, grid, n_sources: int) -> np.ndarray:
    """Class centres in radians, wrapped into [0, 2*pi).

    Splitting models take the first maximum of every source posterior (N, G);
    MLC takes the N strongest circular peaks of its vector (G,), ascending.
    """
    posterior = np.asarray(posterior)
    if model_kind == "mlc":
        indices = peak_indices(posterior, n_sources)
    else:
        indices = np.argmax(posterior, axis=-1)
    return grid.wrapped_angles[indices]


class DoaEstimator:
    """Wraps a trained model with its feature extraction."""

    def __init__(self, model: DoaModel):
        self.model = model.eval()
        self.config = model.config
        self.extractor = FeatureExtractor(model.config)

    def posterior(self, waveform: Waveform) -> np.ndarray:
        """Model output for one recording: (N, G), or (G,) for MLC."""
        features = torch.as_tensor(self.extractor(waveform), dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            return self.model(features)[0].double().numpy()

    def estimate(self, waveform: Waveform) -> np.ndarray:
        """One azimuth per source, radians."""
        return decode(self.posterior(waveform), self.config.kind, self.config.grid, self.config.n_sources)

    def chunked_estimate(self, waveform: Waveform, chunk_ms: float = CHUNK_MS, overlap: float = CHUNK_OVERLAP):
        """Per-source circular median of estimates on overlapping chunks.

        Chunk estimates are sorted ascending before taking medians. Recordings
        shorter than one chunk fall back to the whole-utterance estimate.
        """
        chunk = int(round(chunk_ms * waveform.sample_rate / 1000.0))
        hop = max(1, int(round(chunk * (1.0 - overlap))))
        if waveform.num_samples < chunk:
            _LOGGER.warning(
                "Recording of %d samples is shorter than one %g ms chunk; using the whole utterance",
                waveform.num_samples,
                chunk_ms,
            )
            return self.estimate(waveform)
        estimates = []
        for start in range(0, waveform.num_samples - chunk + 1, hop):
            piece = Waveform(waveform.samples[:, start : start + chunk], waveform.sample_rate)
            estimates.append(np.sort(np.degrees(self.estimate(piece))))
        estimates = np.mod(np.asarray(estimates), 360.0)
        _LOGGER.debug("Chunked estimate over %d chunks", len(estimates))
        return np.radians([circular_median(estimates[:, n]) for n in range(estimates.shape[1])])


def circular_median(angles_deg) -> float:
    """Angle among the inputs with the smallest summed cyclic deviation; ties go to the smallest angle."""
    values = np.mod(np.asarray(angles_deg, dtype=np.float64), 360.0)
    candidates, counts = np.unique(values, return_counts=True)
    deviation = cyclic_distance_deg(candidates[:, np.newaxis], candidates[np.newaxis, :]) @ counts
    return float(candidates[int(np.argmin(deviation))])
