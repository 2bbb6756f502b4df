"""Tests for the YAML configuration."""
import os
import tempfile
import unittest

from test.helper import TINY_CONFIG_YAML
from doalab.config import (
    ExperimentConfig,
    ExperimentRow,
    ModelSettings,
    SimulationConfig,
    TrainConfig,
    config_from_dict,
    load_config,
)
from doalab.dsp import STFTConfig
from doalab.exceptions import ConfigException

DESK_CONFIG = os.path.join(os.path.dirname(__file__), "..", "..", "configs", "desk.yaml")


class TestConfig(unittest.TestCase):
    """Tests for load_config and the settings classes."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _load(self, text):
        path = os.path.join(self.tmp.name, "config.yaml")
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(text)
        return load_config(path)

    def test_defaults(self):
        """Without a file every section takes its defaults."""
        config = load_config(None)
        self.assertEqual(ExperimentConfig(), config)
        self.assertEqual(STFTConfig(), config.stft)
        self.assertEqual(2000, config.simulation.n_train)
        self.assertEqual((0.25, 0.7), config.simulation.t60_range)
        self.assertEqual("mask_split", config.model.kind)
        self.assertEqual(1e-3, config.train.learning_rate)
        self.assertEqual((), config.experiments)

    def test_desk_config(self):
        """The shipped desk-scale configuration lists the experiment grid."""
        config = load_config(DESK_CONFIG)
        self.assertEqual(7, len(config.experiments))
        self.assertEqual("uca10", config.simulation.geometry)
        names = [row.name for row in config.experiments]
        self.assertIn("mask_split_g10_sce", names)
        self.assertIn("mlc_g10_bce", names)
        self.assertEqual(1.0, config.experiments[-1].gamma)

    def test_tiny_config(self):
        """Lists become tuples and unset keys keep their defaults."""
        config = self._load(TINY_CONFIG_YAML)
        self.assertEqual(9, config.stft.n_freqs)
        self.assertEqual((0.2, 0.3), config.simulation.duration_range)
        self.assertEqual(8, config.model.hidden)
        self.assertEqual(0.1, config.train.crop_seconds)
        self.assertEqual(10.0, config.simulation.min_separation_deg)

    def test_invalid_files(self):
        """Unreadable and unparsable files are configuration errors."""
        with self.assertRaises(ConfigException):
            load_config(os.path.join(self.tmp.name, "missing.yaml"))
        with self.assertRaises(ConfigException):
            self._load("train: [1, 2\n")

    def test_empty_sections(self):
        """An empty file or section keeps the defaults."""
        self.assertEqual(ExperimentConfig(), self._load(""))
        self.assertEqual(TrainConfig(), self._load("train:\n").train)

    def test_invalid_documents(self):
        """Unknown keys, sections and versions are rejected."""
        for text in (
            "version: 2",
            "training:\n  epochs: 3",
            "train:\n  epoch: 3",
            "model:\n  gamma: 100.0",
            "model:\n  kind: rnn",
            "train:\n  loss: mse",
            "train:\n  learning_rate: fast",
            "simulation:\n  t60_range: [0.7, 0.25]",
            "simulation:\n  geometry: uca4",
            "stft:\n  hop_ms: 50.0",
            "experiments:\n  - name: a\n  - name: a",
            "experiments:\n  - model: mlc",
            "experiments: 3",
            "train: 3",
            "- 1\n- 2",
        ):
            with self.subTest(text=text):
                with self.assertRaises(ConfigException):
                    self._load(text)

    def test_from_dict(self):
        """Documents already parsed validate the same way."""
        config = config_from_dict({"simulation": {"n_sources": 3, "room_min": [4.0, 4.0, 2.5]}})
        self.assertEqual(3, config.simulation.n_sources)
        self.assertEqual((4.0, 4.0, 2.5), config.simulation.room_min)

    def test_experiment_row(self):
        """A row overrides model kind, resolution, sharing, loss and PIT."""
        row = ExperimentRow("grid", model="map_split_c", gamma=5.0, loss="semd", pit=True, predictor_sharing=False)
        model, train = row.apply(ModelSettings(hidden=12), TrainConfig(epochs=3))
        self.assertEqual(ModelSettings("map_split_c", 5.0, 12, False), model)
        self.assertEqual(TrainConfig(loss="semd", pit=True, epochs=3), train)

    def test_settings_validation(self):
        """Settings check their own ranges."""
        with self.assertRaises(ConfigException):
            SimulationConfig(n_sources=0)
        with self.assertRaises(ConfigException):
            SimulationConfig(workers=0)
        with self.assertRaises(ConfigException):
            TrainConfig(grad_clip=0.0)
        self.assertTrue(SimulationConfig(fixed_snr_db=5.0).snr_is_fixed())
        self.assertFalse(SimulationConfig().snr_is_fixed())
