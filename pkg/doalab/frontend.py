"""
DOA driven separation frontend.

Steering vectors and angle features turn azimuth estimates into time-frequency
masks; masks give spatial covariance matrices, which give MVDR filters in the
Souden formulation. Per-frequency arrays are laid out (F, M, M) for covariance
matrices and (F, M) for filters.
"""

import csv
import logging
from typing import Optional, Sequence

import numpy as np

from doalab.audio import atomic_write
from doalab.dsp import ArrayGeometry, MultichannelSpectrogram, STFTConfig, Waveform, istft, stft
from doalab.exceptions import BeamformerException, SignalException

_LOGGER = logging.getLogger(__name__)

MASK_FLOOR = 1e-8
LOADING = 1e-6
CONDITION_LIMIT = 1e12


def steering_vector(theta, geometry: ArrayGeometry, freqs) -> np.ndarray:
    """Far-field steering vectors d(f) with d_m(f) = exp(j 2 pi f tau_m), tau_m = r/c cos(theta - psi_m).

    `theta` may be a scalar (result (F, M)) or an array of angles (result (..., F, M)).
    """
    theta = np.asarray(theta, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    psi = np.asarray(geometry.mic_angles)
    tau = geometry.radius / geometry.speed_of_sound * np.cos(theta[..., np.newaxis] - psi)
    return np.exp(2j * np.pi * freqs[:, np.newaxis] * tau[..., np.newaxis, :])


def angle_features(spectrogram: MultichannelSpectrogram, doas: Sequence[float], geometry: ArrayGeometry):
    """Per-source angle features, shape (N, T, F).

    a^n keeps |d^n(f)^H y(t, f)|^2 where it is at least as large as every other
    source's value and is zero elsewhere; exact ties keep all tied sources.
    """
    if len(doas) < 1:
        raise SignalException("angle features need at least one direction")
    freqs = spectrogram.config.frequencies()
    # (N, F, M)
    steer = np.stack([steering_vector(theta, geometry, freqs) for theta in doas])
    raw = np.abs(np.einsum("nfm,tmf->ntf", np.conj(steer), spectrogram.data)) ** 2
    dominant = raw >= raw.max(axis=0, keepdims=True)
    return np.where(dominant, raw, 0.0)


def angle_feature_masks(features: np.ndarray) -> np.ndarray:
    """Ratio masks from angle features, each bin normalised over sources."""
    total = features.sum(axis=0, keepdims=True)
    return features / np.maximum(total, MASK_FLOOR)


def scm_from_mask(spectrogram: MultichannelSpectrogram, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Mask weighted spatial covariance per frequency, shape (F, M, M).

    Frequencies whose mask sums to zero give a zero matrix.
    """
    data = spectrogram.data
    if mask is None:
        mask = np.ones(data.shape[0:1] + data.shape[2:3])
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (spectrogram.num_frames, spectrogram.num_freqs):
        raise SignalException("mask shape {} does not match spectrogram".format(mask.shape))
    weighted = np.einsum("tf,tmf,tnf->fmn", mask, data, np.conj(data))
    denominator = mask.sum(axis=0)
    scm = weighted / np.maximum(denominator, MASK_FLOOR)[:, np.newaxis, np.newaxis]
    # enforce exact Hermitian symmetry
    return 0.5 * (scm + np.conj(np.swapaxes(scm, -1, -2)))


def _well_conditioned(matrix) -> bool:
    # cond() is inf or nan for singular matrices
    return bool(np.linalg.cond(matrix) <= CONDITION_LIMIT)


def _solve_mvdr_bin(target, denominator, ref):
    """Filter of one frequency and whether diagonal loading was needed."""
    num_mics = target.shape[0]
    if not np.any(target):
        return np.zeros(num_mics, dtype=np.complex128), False
    matrix, loaded = denominator, False
    if not _well_conditioned(matrix):
        scale = max(np.real(np.trace(matrix)), np.real(np.trace(target))) / num_mics
        _LOGGER.debug("Diagonal loading %.3g on an ill-conditioned covariance", LOADING * scale)
        matrix = matrix + LOADING * scale * np.eye(num_mics)
        loaded = True
        if scale <= 0 or not _well_conditioned(matrix):
            raise BeamformerException("interference plus noise covariance is singular")
    numerator = np.linalg.solve(matrix, target)
    trace = np.trace(numerator)
    if abs(trace) == 0:
        raise BeamformerException("MVDR normalisation trace is zero")
    return numerator[:, ref] / trace, loaded


def mvdr_weights(target: np.ndarray, interference: np.ndarray, noise: Optional[np.ndarray] = None, ref: int = 1):
    """Souden MVDR filter b(f) = [(Phi_i + Phi_n)^-1 Phi_t / Tr(.)] u for every frequency.

    `ref` is the 0-based reference microphone. A missing noise covariance is
    treated as the all-zero matrix. Frequencies with an all-zero target
    covariance get zero weights.
    """
    target = np.asarray(target, dtype=np.complex128)
    interference = np.asarray(interference, dtype=np.complex128)
    if target.ndim == 2:
        return mvdr_weights(target[np.newaxis], interference[np.newaxis], None if noise is None else
                            np.asarray(noise)[np.newaxis], ref)[0]
    if target.shape != interference.shape:
        raise SignalException("target and interference covariances differ in shape")
    denominator = interference if noise is None else interference + np.asarray(noise, dtype=np.complex128)
    if not 0 <= ref < target.shape[-1]:
        raise SignalException("reference microphone {} out of range".format(ref))
    weights = np.empty(target.shape[:2], dtype=np.complex128)
    loaded = 0
    for freq in range(target.shape[0]):
        weights[freq], retried = _solve_mvdr_bin(target[freq], denominator[freq], ref)
        loaded += retried
    if loaded:
        _LOGGER.warning("Diagonal loading applied at %d of %d frequencies", loaded, target.shape[0])
    return weights


def condition_numbers(interference: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Condition number of the MVDR denominator per frequency."""
    denominator = interference if noise is None else interference + noise
    return np.linalg.cond(denominator)


def write_condition_csv(path, conditions: np.ndarray, config: STFTConfig):
    """Dump per-frequency condition numbers as CSV (freq_hz, condition)."""
    with atomic_write(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["freq_hz", "condition"])
        for freq, value in zip(config.frequencies(), conditions):
            writer.writerow(["{:.2f}".format(freq), "{:.6g}".format(value)])


def apply_beamformer(spectrogram: MultichannelSpectrogram, weights: np.ndarray) -> np.ndarray:
    """x(t, f) = b(f)^H y(t, f), shape (T, F)."""
    weights = np.asarray(weights)
    if weights.shape != (spectrogram.num_freqs, spectrogram.num_channels):
        raise SignalException("beamformer weights {} do not match spectrogram".format(weights.shape))
    return np.einsum("fm,tmf->tf", np.conj(weights), spectrogram.data)


def separate(
    mixture: Waveform,
    geometry: ArrayGeometry,
    doas: Optional[Sequence[float]] = None,
    masks: Optional[np.ndarray] = None,
    ref_mic: int = 2,
    config: STFTConfig = STFTConfig(),
    noise_scm: Optional[np.ndarray] = None,
    condition_csv=None,
):
    """Separate every source of a mixture with mask based MVDR beamforming.

    Masks come either from `masks` (N, T, F), e.g. oracle binary masks, or from
    angle features of the directions in `doas`. `ref_mic` is 1-based. Returns
    one mono Waveform per source.
    """
    spectrogram = stft(mixture, config)
    if masks is None:
        if doas is None:
            raise SignalException("separation needs either directions or masks")
        masks = angle_feature_masks(angle_features(spectrogram, doas, geometry))
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim != 3 or masks.shape[0] < 1:
        raise SignalException("masks must have shape (N, T, F)")
    scms = np.stack([scm_from_mask(spectrogram, mask) for mask in masks])
    outputs = []
    for index in range(scms.shape[0]):
        interference = scms.sum(axis=0) - scms[index]
        weights = mvdr_weights(scms[index], interference, noise_scm, ref=ref_mic - 1)
        if condition_csv is not None:
            write_condition_csv(
                "{}.src{}.csv".format(condition_csv, index), condition_numbers(interference, noise_scm), config
            )
        separated = apply_beamformer(spectrogram, weights)
        single = MultichannelSpectrogram(separated[:, np.newaxis, :], config, mixture.num_samples)
        outputs.append(istft(single))
    _LOGGER.debug("Separated %d sources", len(outputs))
    return outputs
