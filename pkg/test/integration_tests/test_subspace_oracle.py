"""Subspace localisation of simulated anechoic talkers."""
import math
import unittest

import numpy as np

from test.helper import placement_deg, shoebox_room
from doalab.dsp import stft
from doalab.evaluation import cyclic_mae
from doalab.grid import AngularGrid
from doalab.sim import synthesize_mixture, synthetic_speech
from doalab.subspace import music_nam_spectrum, pick_peaks

TRIALS = 100
TWO_SOURCE_TRIALS = 30


class TestSubspaceOracle(unittest.TestCase):
    """MUSIC-NAM on free-field, noise-free mixtures of synthetic speech."""

    def setUp(self):
        self.room = shoebox_room()
        self.grid = AngularGrid(1.0)
        self.rng = np.random.default_rng(2024)

    def _localise(self, azimuths):
        sources = [synthetic_speech(self.rng, 8000) for _ in azimuths]
        placements = [placement_deg(azimuth) for azimuth in azimuths]
        example = synthesize_mixture(sources, self.room, placements, None, math.inf, max_order=0)
        spectrum = music_nam_spectrum(stft(example.mixture), self.room.geometry, self.grid, len(azimuths))
        return np.degrees(pick_peaks(spectrum, len(azimuths)))

    def test_single_source(self):
        """A single talker is found within one degree in at least 95 of 100 trials."""
        hits = 0
        for _ in range(TRIALS):
            azimuth = float(self.rng.uniform(0.0, 360.0))
            hits += cyclic_mae(self._localise([azimuth]), [azimuth]) <= 1.0
        self.assertGreaterEqual(hits, 95)

    def test_two_sources(self):
        """Two talkers at least 20 degrees apart are found with a mean error below five degrees."""
        errors = []
        for _ in range(TWO_SOURCE_TRIALS):
            first = float(self.rng.uniform(0.0, 360.0))
            second = (first + float(self.rng.uniform(20.0, 340.0))) % 360.0
            errors.append(cyclic_mae(self._localise([first, second]), [first, second]))
        self.assertLess(float(np.mean(errors)), 5.0)
