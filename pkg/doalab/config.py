"""
Experiment configuration read from YAML files.

Schema (version 1)::

    version: 1
    stft:         # sample_rate, window_ms, hop_ms, fft_size, window
    simulation:   # see SimulationConfig
    model:        # kind, gamma, hidden, predictor_sharing
    train:        # loss, pit, epochs, learning_rate, batch_size, crop_seconds, grad_clip, threads
    experiments:  # list of rows with name, model, gamma, loss, pit, predictor_sharing

Every section is optional; missing keys take the defaults below. Floats
need a decimal point (0.001 rather than 1e-3) to parse as numbers.
"""

from dataclasses import dataclass, field, fields, replace
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import yaml

from doalab.dsp import STFTConfig
from doalab.exceptions import ConfigException

_LOGGER = logging.getLogger(__name__)

CONFIG_VERSION = 1

MODEL_KINDS = ("mlc", "mask_split", "map_split_c", "map_split_r")
LOSS_KINDS = ("bce", "ce", "sce", "emd", "semd")
GEOMETRY_NAMES = ("uca5", "uca10", "qa10")


def _check_range(name, value, low=None, high=None):
    if len(value) != 2 or value[0] > value[1]:
        raise ConfigException("{} must be an increasing [low, high] pair, got {}".format(name, list(value)))
    if low is not None and value[0] < low:
        raise ConfigException("{} lower bound must be >= {}".format(name, low))
    if high is not None and value[1] > high:
        raise ConfigException("{} upper bound must be <= {}".format(name, high))


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of the mixture simulator; ranges are sampled uniformly."""

    geometry: str = "uca10"
    n_sources: int = 2
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    duration_range: Tuple[float, float] = (1.0, 2.0)
    t60_range: Tuple[float, float] = (0.25, 0.7)
    distance_range: Tuple[float, float] = (1.0, 2.0)
    snr_range: Tuple[float, float] = (10.0, 20.0)
    fixed_snr_db: Optional[float] = None
    room_min: Tuple[float, float, float] = (5.0, 5.0, 2.6)
    room_max: Tuple[float, float, float] = (11.0, 11.0, 3.4)
    array_margin: float = 1.2
    array_height_range: Tuple[float, float] = (1.0, 1.6)
    source_wall_margin: float = 0.3
    min_separation_deg: float = 10.0
    rir_max_seconds: Optional[float] = None
    source_dir: Optional[str] = None
    noise_dir: Optional[str] = None
    keep_noise: bool = True
    workers: int = 1
    sample_rate: int = 16000

    def __post_init__(self):
        if self.geometry not in GEOMETRY_NAMES:
            raise ConfigException("simulation.geometry must be one of {}".format(", ".join(GEOMETRY_NAMES)))
        if self.n_sources < 1:
            raise ConfigException("simulation.n_sources must be >= 1")
        if min(self.n_train, self.n_dev, self.n_test) < 0:
            raise ConfigException("split sizes must be non-negative")
        _check_range("simulation.duration_range", self.duration_range, low=0.1)
        _check_range("simulation.t60_range", self.t60_range)
        if self.t60_range[0] <= 0:
            raise ConfigException("simulation.t60_range must be positive")
        _check_range("simulation.distance_range", self.distance_range, low=0.2)
        _check_range("simulation.snr_range", self.snr_range)
        _check_range("simulation.array_height_range", self.array_height_range, low=0.0)
        if len(self.room_min) != 3 or len(self.room_max) != 3:
            raise ConfigException("room_min and room_max need three entries")
        if any(low > high or low <= 0 for low, high in zip(self.room_min, self.room_max)):
            raise ConfigException("room_min must be positive and not exceed room_max")
        if not 0 <= self.min_separation_deg < 180:
            raise ConfigException("simulation.min_separation_deg must be in [0, 180)")
        if self.workers < 1:
            raise ConfigException("simulation.workers must be >= 1")

    @property
    def split_sizes(self):
        """(split, count) in generation order."""
        return (("train", self.n_train), ("dev", self.n_dev), ("test", self.n_test))

    def snr_is_fixed(self) -> bool:
        """True when every mixture uses fixed_snr_db."""
        return self.fixed_snr_db is not None and not math.isnan(self.fixed_snr_db)


@dataclass(frozen=True)
class ModelSettings:
    """Network choice; predictor_sharing None selects the per-model default."""

    kind: str = "mask_split"
    gamma: float = 10.0
    hidden: Optional[int] = None
    predictor_sharing: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigException("model.kind must be one of {}".format(", ".join(MODEL_KINDS)))
        if not 0 < self.gamma <= 72:
            raise ConfigException("model.gamma must be in (0, 72] so that at least five classes exist")
        if self.hidden is not None and self.hidden < 1:
            raise ConfigException("model.hidden must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and batching settings."""

    loss: str = "sce"
    pit: bool = False
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 16
    crop_seconds: float = 1.0
    grad_clip: Optional[float] = None
    threads: int = 1

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigException("train.loss must be one of {}".format(", ".join(LOSS_KINDS)))
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ConfigException("train.epochs, batch_size and threads must be >= 1")
        if self.learning_rate <= 0 or self.crop_seconds <= 0:
            raise ConfigException("train.learning_rate and crop_seconds must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigException("train.grad_clip must be positive when set")


@dataclass(frozen=True)
class ExperimentRow:
    """One row of an experiment grid."""

    name: str
    model: str = "mask_split"
    gamma: float = 10.0
    loss: str = "sce"
    pit: bool = False
    predictor_sharing: Optional[bool] = None

    def apply(self, model: ModelSettings, train: TrainConfig):
        """Return the model and train settings overridden by this row."""
        return (
            replace(model, kind=self.model, gamma=self.gamma, predictor_sharing=self.predictor_sharing),
            replace(train, loss=self.loss, pit=self.pit),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """A whole configuration file."""

    stft: STFTConfig = field(default_factory=STFTConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiments: Tuple[ExperimentRow, ...] = ()
    version: int = CONFIG_VERSION


def _build(cls, table, section):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(table, dict):
        raise ConfigException("{} must be a mapping".format(section))
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigException("unknown key(s) in {}: {}".format(section, ", ".join(unknown)))
    kwargs = {key: tuple(value) if isinstance(value, list) else value for key, value in table.items()}
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigException("invalid {} section: {}".format(section, err)) from err


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed configuration document."""
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigException("unsupported config version {} (expected {})".format(version, CONFIG_VERSION))
    unknown = sorted(set(data) - {"version", "stft", "simulation", "model", "train", "experiments"})
    if unknown:
        raise ConfigException("unknown section(s): {}".format(", ".join(unknown)))
    # an empty section parses as None
    sections = {name: {} if value is None else value for name, value in data.items()}
    rows = sections.get("experiments") or []
    if not isinstance(rows, list):
        raise ConfigException("experiments must be a list of mappings")
    experiments = tuple(_build(ExperimentRow, row, "experiments") for row in rows)
    names = [row.name for row in experiments]
    if len(set(names)) != len(names):
        raise ConfigException("experiment names must be unique")
    return ExperimentConfig(
        stft=_build(STFTConfig, sections.get("stft", {}), "stft"),
        simulation=_build(SimulationConfig, sections.get("simulation", {}), "simulation"),
        model=_build(ModelSettings, sections.get("model", {}), "model"),
        train=_build(TrainConfig, sections.get("train", {}), "train"),
        experiments=experiments,
        version=version,
    )


def load_config(path=None) -> ExperimentConfig:
    """Read a YAML configuration; None gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(Path(path), "r", encoding="utf-8") as stream:
            data = yaml.safe_load(stream)
    except OSError as err:
        raise ConfigException("cannot read config {}: {}".format(path, err)) from err
    except yaml.YAMLError as err:
        raise ConfigException("cannot parse config {}: {}".format(path, err)) from err
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigException("config {} must be a mapping of sections".format(path))
    _LOGGER.debug("Loaded configuration from %s", path)
    return config_from_dict(data)
