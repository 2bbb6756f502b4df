"""Tests for decoding and chunked inference."""
import math
import unittest
from unittest import mock

import numpy as np

from test.helper import toy_model_config
from doalab.dsp import Waveform
from doalab.grid import AngularGrid
from doalab.neural.inference import DoaEstimator, circular_median, decode
from doalab.neural.models import build_model


class TestDecode(unittest.TestCase):
    """Tests for turning posteriors into angles."""

    def test_argmax(self):
        """Splitting models take the first maximum of every posterior."""
        grid = AngularGrid(1.0)
        posterior = np.zeros((2, 360))
        posterior[0, 89] = 1.0
        posterior[1] = 1.0 / 360
        np.testing.assert_allclose([math.pi / 2, math.radians(1.0)], decode(posterior, "mask_split", grid, 2))

    def test_mlc_peaks(self):
        """MLC takes the strongest circular peaks in ascending order."""
        grid = AngularGrid(10.0)
        vector = np.full(36, 0.01)
        vector[19] = 0.8
        vector[4] = 0.9
        vector[5] = 0.3
        np.testing.assert_allclose(np.radians([45.5, 195.5]), decode(vector, "mlc", grid, 2))

    def test_mlc_plateau(self):
        """Adjacent equal maxima form a single peak."""
        grid = AngularGrid(10.0)
        vector = np.full(36, 0.01)
        vector[[4, 5]] = 0.9
        vector[20] = 0.5
        np.testing.assert_allclose(np.radians([45.5, 205.5]), decode(vector, "mlc", grid, 2))

    def test_mlc_flat(self):
        """A flat vector falls back to the lowest classes."""
        np.testing.assert_allclose(np.radians([5.5, 15.5]), decode(np.ones(36), "mlc", AngularGrid(10.0), 2))


class TestCircularMedian(unittest.TestCase):
    """Tests for circular_median."""

    def test_majority(self):
        """The median minimises the summed cyclic deviation."""
        self.assertEqual(10.0, circular_median([10.0, 10.0, 350.0]))
        self.assertEqual(5.0, circular_median([350.0, 5.0, 10.0]))

    def test_tie(self):
        """Ties go to the smaller angle."""
        self.assertEqual(10.0, circular_median([20.0, 10.0]))


class TestEstimator(unittest.TestCase):
    """Tests for DoaEstimator."""

    def setUp(self):
        self.estimator = DoaEstimator(build_model(toy_model_config("mask_split")))
        self.rng = np.random.default_rng(0)

    def test_estimate(self):
        """Whole-utterance estimates are class centres, one per source."""
        waveform = Waveform(self.rng.standard_normal((3, 1600)))
        self.assertEqual((2, 6), self.estimator.posterior(waveform).shape)
        angles = np.degrees(self.estimator.estimate(waveform))
        self.assertEqual(2, angles.size)
        for angle in angles:
            self.assertIn(round(float(angle), 6), [30.5, 90.5, 150.5, 210.5, 270.5, 330.5])

    def test_mlc_posterior(self):
        """MLC yields a single multi-label vector."""
        estimator = DoaEstimator(build_model(toy_model_config("mlc")))
        self.assertEqual((6,), estimator.posterior(Waveform(self.rng.standard_normal((3, 800)))).shape)

    def test_short_recording(self):
        """Recordings shorter than one chunk use the whole utterance."""
        waveform = Waveform(self.rng.standard_normal((3, 800)))
        with self.assertLogs("doalab.neural.inference", "WARNING"):
            angles = self.estimator.chunked_estimate(waveform)
        np.testing.assert_array_equal(self.estimator.estimate(waveform), angles)

    def test_chunk_median(self):
        """Chunk estimates are sorted per chunk and combined by circular median."""
        chunks = [[10.0, 200.0], [200.0, 10.0], [10.0, 205.0], [20.0, 200.0], [195.0, 10.0]]
        side_effect = [np.radians(chunk) for chunk in chunks]
        waveform = Waveform(np.zeros((3, 4800)))
        with mock.patch.object(DoaEstimator, "estimate", side_effect=side_effect) as estimate:
            angles = self.estimator.chunked_estimate(waveform)
        self.assertEqual(5, estimate.call_count)
        self.assertEqual(1600, estimate.call_args[0][0].num_samples)
        np.testing.assert_allclose([10.0, 200.0], np.degrees(angles))
