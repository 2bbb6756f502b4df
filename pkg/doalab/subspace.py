"""
Subspace DOA baselines on a circular azimuth grid: incoherent MUSIC, MUSIC with
normalised arithmetic mean fusion and TOPS, plus circular peak picking.
"""

import csv
from dataclasses import dataclass
import logging
from typing import Tuple

import numpy as np

from doalab.audio import atomic_write
from doalab.dsp import ArrayGeometry, MultichannelSpectrogram
from doalab.exceptions import SubspaceException
from doalab.frontend import steering_vector
from doalab.grid import AngularGrid

_LOGGER = logging.getLogger(__name__)

EPSILON = 1e-10
LOADING = 1e-8
DEFAULT_FREQ_RANGE = (100.0, 8000.0)


@dataclass
class SpatialSpectrum:
    """Non-negative pseudo-spectrum over the classes of `grid`."""

    grid: AngularGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.size,):
            raise SubspaceException("spectrum has {} values for a grid of {}".format(self.values.size, self.grid.size))

    def write_csv(self, path):
        """Write (angle_deg, value) rows."""
        with atomic_write(path, "w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow(["angle_deg", "value"])
            for angle, value in zip(self.grid.degrees_of(np.arange(self.grid.size)), self.values):
                writer.writerow(["{:.4f}".format(angle), "{:.8g}".format(value)])


def narrowband_scm(spectrogram: MultichannelSpectrogram, freq_bin: int) -> np.ndarray:
    """Average of y yᴴ over all frames at one bin."""
    frames = spectrogram.data[:, :, freq_bin]
    scm = frames.T @ np.conj(frames) / max(spectrogram.num_frames, 1)
    return 0.5 * (scm + np.conj(scm.T))


def _band(spectrogram, freq_range):
    freqs = spectrogram.config.frequencies()
    bins = np.flatnonzero((freqs >= freq_range[0]) & (freqs <= freq_range[1]))
    if bins.size == 0:
        raise SubspaceException("no STFT bin between {} and {} Hz".format(*freq_range))
    return bins, freqs[bins]


def _check_sources(spectrogram, n_sources):
    if not 1 <= n_sources < spectrogram.num_channels:
        raise SubspaceException(
            "subspace methods need 1 <= N < M, got N={} with M={}".format(n_sources, spectrogram.num_channels)
        )


def _noise_subspaces(spectrogram, bins, n_sources):
    """Eigen-decomposition per bin after diagonal loading; returns (signal, noise) eigenvector stacks."""
    data = spectrogram.data[:, :, bins]
    scms = np.einsum("tmf,tnf->fmn", data, np.conj(data)) / max(spectrogram.num_frames, 1)
    scms = 0.5 * (scms + np.conj(np.swapaxes(scms, -1, -2)))
    num_mics = scms.shape[-1]
    loading = LOADING * np.real(np.trace(scms, axis1=1, axis2=2)) / num_mics
    scms = scms + loading[:, np.newaxis, np.newaxis] * np.eye(num_mics)
    try:
        # eigenvalues ascending: the first M - N vectors span the noise subspace
        _, vectors = np.linalg.eigh(scms)
    except np.linalg.LinAlgError as err:
        raise SubspaceException("eigendecomposition failed: {}".format(err)) from err
    return vectors[:, :, num_mics - n_sources :], vectors[:, :, : num_mics - n_sources], scms


def _music_bands(spectrogram, geometry, grid, n_sources, freq_range):
    """Narrowband MUSIC pseudo-spectra, shape (bins, grid)."""
    _check_sources(spectrogram, n_sources)
    bins, freqs = _band(spectrogram, freq_range)
    _, noise, _ = _noise_subspaces(spectrogram, bins, n_sources)
    # (G, F, M)
    steer = steering_vector(grid.class_angles, geometry, freqs)
    projection = np.einsum("fmk,gfm->fgk", np.conj(noise), steer)
    return 1.0 / (np.sum(np.abs(projection) ** 2, axis=-1) + EPSILON)


def music_spectrum(
    spectrogram: MultichannelSpectrogram,
    geometry: ArrayGeometry,
    grid: AngularGrid,
    n_sources: int,
    freq_range: Tuple[float, float] = DEFAULT_FREQ_RANGE,
) -> SpatialSpectrum:
    """Incoherent wideband MUSIC: narrowband pseudo-spectra averaged over the band."""
    bands = _music_bands(spectrogram, geometry, grid, n_sources, freq_range)
    return SpatialSpectrum(grid, bands.mean(axis=0))


def music_nam_spectrum(
    spectrogram: MultichannelSpectrogram,
    geometry: ArrayGeometry,
    grid: AngularGrid,
    n_sources: int,
    freq_range: Tuple[float, float] = DEFAULT_FREQ_RANGE,
) -> SpatialSpectrum:
    """MUSIC with normalised arithmetic mean fusion: every narrowband spectrum is divided by its grid mean."""
    bands = _music_bands(spectrogram, geometry, grid, n_sources, freq_range)
    return SpatialSpectrum(grid, (bands / bands.mean(axis=1, keepdims=True)).mean(axis=0))


def tops_spectrum(
    spectrogram: MultichannelSpectrogram,
    geometry: ArrayGeometry,
    grid: AngularGrid,
    n_sources: int,
    freq_range: Tuple[float, float] = DEFAULT_FREQ_RANGE,
) -> SpatialSpectrum:
    """Test of orthogonality of projected subspaces.

    The signal subspace of the highest-energy bin is shifted to every other bin
    for each candidate angle, projected away from that angle's steering vector
    and tested against the bin's noise subspace; the inverse smallest singular
    value of the stacked test matrix forms the spectrum.
    """
    _check_sources(spectrogram, n_sources)
    bins, freqs = _band(spectrogram, freq_range)
    if bins.size < 2:
        raise SubspaceException("TOPS needs at least two usable frequency bins")
    signal, noise, scms = _noise_subspaces(spectrogram, bins, n_sources)
    reference = int(np.argmax(np.real(np.trace(scms, axis1=1, axis2=2))))
    others = np.delete(np.arange(bins.size), reference)
    _LOGGER.debug("TOPS reference bin at %.1f Hz", freqs[reference])

    num_mics = geometry.num_mics
    tau = geometry.radius / geometry.speed_of_sound * np.cos(
        grid.class_angles[:, np.newaxis] - np.asarray(geometry.mic_angles)
    )
    # (G, K, M) frequency shift of every candidate's steering vector from the reference bin
    shift = np.exp(2j * np.pi * (freqs[others] - freqs[reference])[np.newaxis, :, np.newaxis] * tau[:, np.newaxis, :])
    shifted = shift[..., np.newaxis] * signal[reference][np.newaxis, np.newaxis]
    steer = steering_vector(grid.class_angles, geometry, freqs[others])
    inner = np.einsum("gkm,gkmn->gkn", np.conj(steer), shifted)
    projected = shifted - steer[..., np.newaxis] * inner[:, :, np.newaxis, :] / num_mics
    # D(theta) = [U_1'ᴴ En_1, ..., U_K'ᴴ En_K]; D Dᴴ summed over bins
    blocks = np.einsum("gkmn,kmr->gknr", np.conj(projected), noise[others])
    gram = np.einsum("gknr,gkpr->gnp", blocks, np.conj(blocks))
    smallest = np.linalg.eigvalsh(gram)[:, 0]
    return SpatialSpectrum(grid, 1.0 / (np.sqrt(np.maximum(smallest, 0.0)) + EPSILON))


SUBSPACE_METHODS = {
    "music": music_spectrum,
    "music_nam": music_nam_spectrum,
    "tops": tops_spectrum,
}


def peak_indices(values, n_peaks: int) -> np.ndarray:
    """Indices of the `n_peaks` largest circular local maxima, topped up by value if too few exist.

    A local maximum is strictly greater than its cyclic neighbours; a plateau
    counts once, at its leftmost index. Ties in value go to the lower index.
    The result is sorted ascending.
    """
    values = np.asarray(values, dtype=np.float64)
    size = values.size
    peaks = []
    for index in range(size):
        if not values[index] > values[index - 1]:
            continue
        right = (index + 1) % size
        while right != index and values[right] == values[index]:
            right = (right + 1) % size
        if right != index and values[index] > values[right]:
            peaks.append(index)
    peaks = np.asarray(peaks, dtype=np.int64)
    # descending value, ascending index
    chosen = peaks[np.lexsort((peaks, -values[peaks]))][:n_peaks].tolist()
    if len(chosen) < n_peaks:
        rest = np.setdiff1d(np.arange(size), chosen)
        chosen += rest[np.lexsort((rest, -values[rest]))][: n_peaks - len(chosen)].tolist()
    return np.sort(np.asarray(chosen, dtype=np.int64))


def pick_peaks(spectrum: SpatialSpectrum, n_sources: int) -> np.ndarray:
    """Azimuths in radians, wrapped into [0, 2*pi), of the `n_sources` strongest peaks, sorted ascending."""
    if spectrum.grid.size < 2 * n_sources:
        raise SubspaceException("grid of {} classes is too coarse for {} peaks".format(spectrum.grid.size, n_sources))
    angles = spectrum.grid.wrapped_angles[peak_indices(spectrum.values, n_sources)]
    return np.sort(angles)
