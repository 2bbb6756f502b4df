"""Tests for the signal processing primitives."""
import math
import unittest

import numpy as np

from test import SAMPLE_RATE
from test.helper import TOY_STFT
from doalab.dsp import (
    MultichannelSpectrogram,
    STFTConfig,
    Waveform,
    geometry_by_name,
    ipd_features,
    istft,
    logmel_mvn,
    phase_spectrum,
    stft,
)
from doalab.exceptions import ConfigException, SignalException


class TestSTFT(unittest.TestCase):
    """Tests for the analysis and synthesis transforms."""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_default_config(self):
        """25 ms / 10 ms at 16 kHz with a 512 point FFT."""
        config = STFTConfig()
        self.assertEqual(400, config.win_length)
        self.assertEqual(160, config.hop_length)
        self.assertEqual(257, config.n_freqs)
        self.assertEqual(8000.0, config.frequencies()[-1])

    def test_zero_waveform(self):
        """An all-zero waveform gives an all-zero spectrogram."""
        spectrogram = stft(Waveform(np.zeros((2, 1600))))
        self.assertEqual((11, 2, 257), spectrogram.data.shape)
        self.assertFalse(np.any(spectrogram.data))

    def test_bin_centre_sinusoid(self):
        """A sinusoid at a bin centre peaks in that bin with the windowed-DFT magnitude."""
        config = STFTConfig()
        amplitude = 0.7
        samples = amplitude * np.cos(2 * math.pi * 1000.0 * np.arange(SAMPLE_RATE) / SAMPLE_RATE + 0.3)
        spectrogram = stft(Waveform(samples), config)
        # periodic Hann window of 400 samples sums to 200
        expected = amplitude / 2.0 * config.win_length / 2.0
        for frame in range(3, spectrogram.num_frames - 3):
            magnitude = np.abs(spectrogram.data[frame, 0])
            self.assertEqual(32, int(np.argmax(magnitude)))
            self.assertAlmostEqual(expected, magnitude[32], delta=0.01 * expected)

    def test_round_trip(self):
        """istft(stft(x)) reconstructs random one second signals."""
        samples = self.rng.standard_normal((3, SAMPLE_RATE))
        restored = istft(stft(Waveform(samples)))
        error = np.linalg.norm(restored.samples - samples) / np.linalg.norm(samples)
        self.assertLess(error, 1e-6)

    def test_linearity(self):
        """stft(a x + b y) = a stft(x) + b stft(y)."""
        first = self.rng.standard_normal((2, 4000))
        second = self.rng.standard_normal((2, 4000))
        combined = stft(Waveform(2.5 * first - 0.75 * second)).data
        separate = 2.5 * stft(Waveform(first)).data - 0.75 * stft(Waveform(second)).data
        np.testing.assert_allclose(combined, separate, rtol=0, atol=1e-10)

    def test_zero_spectrogram_synthesis(self):
        """A zero spectrogram synthesises silence."""
        spectrogram = MultichannelSpectrogram(np.zeros((20, 1, 257)), STFTConfig())
        self.assertFalse(np.any(istft(spectrogram).samples))

    def test_single_frame_synthesis(self):
        """Without a known signal length the output spans every frame's window."""
        config = STFTConfig()
        data = self.rng.standard_normal((1, 2, config.n_freqs)) + 0j
        restored = istft(MultichannelSpectrogram(data, config))
        self.assertEqual((2, config.win_length), restored.samples.shape)
        self.assertTrue(np.any(restored.samples))
        longer = istft(MultichannelSpectrogram(np.zeros((20, 1, config.n_freqs)), config))
        self.assertEqual(19 * config.hop_length + config.win_length, longer.num_samples)

    def test_invalid_inputs(self):
        """Empty signals, short FFTs, long hops and mismatched rates are rejected."""
        with self.assertRaises(SignalException):
            stft(Waveform(np.zeros((2, 0))))
        with self.assertRaises(ConfigException):
            STFTConfig(fft_size=256)
        with self.assertRaises(ConfigException):
            STFTConfig(hop_ms=30.0)
        with self.assertRaises(SignalException):
            stft(Waveform(np.zeros(800), sample_rate=8000))


class TestFeatures(unittest.TestCase):
    """Tests for phase, IPD and log-mel features."""

    @staticmethod
    def _spectrogram(num_mics, values):
        data = np.zeros((1, num_mics, TOY_STFT.n_freqs), dtype=np.complex128)
        for channel, row in values.items():
            data[0, channel, : len(row)] = row
        return MultichannelSpectrogram(data, TOY_STFT)

    def test_phase_values(self):
        """Principal phases are wrapped into [0, 2*pi)."""
        phase = phase_spectrum(self._spectrogram(1, {0: [1.0, 1j, -1 - 1j]}))
        self.assertEqual(0.0, phase[0, 0, 0])
        self.assertAlmostEqual(math.pi / 2, phase[0, 0, 1])
        self.assertAlmostEqual(5 * math.pi / 4, phase[0, 0, 2])

    def test_phase_range(self):
        """Tiny negative angles never round up to 2*pi."""
        rng = np.random.default_rng(3)
        data = rng.standard_normal((10, 2, 9)) + 1j * rng.standard_normal((10, 2, 9))
        data[0, 0, 0] = complex(1.0, -1e-300)
        phase = phase_spectrum(MultichannelSpectrogram(data, TOY_STFT))
        self.assertTrue(np.all(phase >= 0.0))
        self.assertTrue(np.all(phase < 2 * math.pi))

    def test_ipd_identical_channels(self):
        """Identical channels give (1/M) + 0j for every pair."""
        geometry = geometry_by_name("uca10")
        rng = np.random.default_rng(5)
        channel = rng.standard_normal((7, 9)) + 1j * rng.standard_normal((7, 9))
        spectrogram = MultichannelSpectrogram(np.repeat(channel[:, np.newaxis, :], 8, axis=1), TOY_STFT)
        features = ipd_features(spectrogram, geometry)
        freqs = TOY_STFT.n_freqs
        self.assertEqual((7, 2 * 8 * freqs + freqs), features.shape)
        for pair in range(8):
            np.testing.assert_allclose(features[:, 2 * pair * freqs : (2 * pair + 1) * freqs], 0.125)
            np.testing.assert_allclose(features[:, (2 * pair + 1) * freqs : (2 * pair + 2) * freqs], 0.0, atol=1e-15)

    def test_ipd_quarter_turn(self):
        """y1 = 1 and y5 = j give real part 0 and imaginary part -1/8 for the pair (1, 5)."""
        geometry = geometry_by_name("uca10")
        features = ipd_features(self._spectrogram(8, {0: [1.0], 4: [1j]}), geometry)
        self.assertAlmostEqual(0.0, features[0, 0])
        self.assertAlmostEqual(-0.125, features[0, TOY_STFT.n_freqs])

    def test_ipd_zero_denominator_and_tail(self):
        """0/0 phase ratios count as angle 0, and the tail is |Y_1| bit for bit."""
        geometry = geometry_by_name("qa10")
        rng = np.random.default_rng(7)
        data = rng.standard_normal((4, 3, 9)) + 1j * rng.standard_normal((4, 3, 9))
        data[:, 1, 0] = 0.0
        spectrogram = MultichannelSpectrogram(data, TOY_STFT)
        features = ipd_features(spectrogram, geometry)
        np.testing.assert_array_equal(features[:, 0], 1.0 / 3.0)
        np.testing.assert_array_equal(features[:, -9:], np.abs(data[:, 0, :]))
        pairs = features[:, : 2 * 3 * 9].reshape(4, 3, 2, 9)
        magnitude = np.hypot(pairs[:, :, 0], pairs[:, :, 1])
        self.assertTrue(np.all(magnitude <= 1.0 / 3.0 + 1e-12))

    def test_ipd_channel_mismatch(self):
        """The spectrogram must have one channel per microphone."""
        with self.assertRaises(SignalException):
            ipd_features(self._spectrogram(2, {0: [1.0]}), geometry_by_name("qa10"))

    def test_logmel_normalised(self):
        """White-noise log-mel features have zero mean and unit variance per dimension."""
        rng = np.random.default_rng(11)
        spectrum = rng.standard_normal((200, 257)) + 1j * rng.standard_normal((200, 257))
        features = logmel_mvn(spectrum)
        self.assertEqual((200, 80), features.shape)
        self.assertTrue(np.all(np.abs(features.mean(axis=0)) < 1e-6))
        np.testing.assert_allclose(features.var(axis=0), 1.0, atol=1e-6)

    def test_logmel_constant(self):
        """A constant spectrum gives all-zero features."""
        features = logmel_mvn(np.ones((10, 257), dtype=np.complex128))
        self.assertFalse(np.any(features))

    def test_logmel_too_short(self):
        """At least two frames are needed."""
        with self.assertRaises(SignalException):
            logmel_mvn(np.ones((1, 257)))


class TestGeometry(unittest.TestCase):
    """Tests for the named arrays."""

    def test_named_arrays(self):
        """uca5, uca10 and qa10 resolve to their radii, microphones and pairs."""
        uca5 = geometry_by_name("uca5")
        self.assertEqual((0.05, 8), (uca5.radius, uca5.num_mics))
        uca10 = geometry_by_name("UCA-10")
        self.assertEqual((0, 4), uca10.pair_list[0])
        self.assertEqual((6, 0), uca10.pair_list[-1])
        qa10 = geometry_by_name("qa10")
        self.assertEqual(((0, 1), (1, 2), (0, 2)), qa10.pair_list)
        np.testing.assert_allclose(qa10.mic_angles, [0.0, math.pi / 4, math.pi / 2])

    def test_mic_positions(self):
        """Microphones lie on the circle around the centre."""
        positions = geometry_by_name("uca10").mic_positions((1.0, 2.0, 1.5))
        np.testing.assert_allclose(np.linalg.norm(positions[:, :2] - [1.0, 2.0], axis=1), 0.1)
        np.testing.assert_allclose(positions[:, 2], 1.5)

    def test_unknown_geometry(self):
        """Unknown names are a configuration error."""
        with self.assertRaises(ConfigException):
            geometry_by_name("uca7")
