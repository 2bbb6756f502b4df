"""
DOA classification networks.

All models map a batch of per-utterance features to posteriors over the
classes of an AngularGrid:

* ``mlc``: LocNet-CNN phase map, time average, one sigmoid multi-label vector (B, G).
* ``map_split_c``: one source-specific affine branch per source on the phase map (B, N, G).
* ``mask_split``: BLSTMP ratio masks pool the phase map per source (B, N, G).
* ``map_split_r``: a BLSTMP on IPD features emits N source-specific maps (B, N, G).

Phase inputs have shape (B, T, M, F), IPD inputs (B, T, 2*I*F + F).
"""

from dataclasses import asdict, dataclass, field
import logging
from typing import Optional

import torch
from torch import nn

from doalab.config import MODEL_KINDS
from doalab.dsp import STFTConfig, geometry_by_name
from doalab.exceptions import ConfigException, SignalException
from doalab.grid import AngularGrid

_LOGGER = logging.getLogger(__name__)

MASK_GUARD = 1e-8

# (kernel, feature maps) per block; the microphone axis is never padded
CNN_SPECS = {
    8: (((4, 1), 4), ((3, 3), 16), ((3, 3), 32)),
    3: (((2, 1), 4), ((2, 3), 16), ((1, 3), 32)),
}

SHARED_PREDICTOR_DEFAULT = {"map_split_c": True, "mask_split": False, "map_split_r": False, "mlc": True}


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild a network: kind, source count, grid, array and STFT."""

    kind: str
    n_sources: int = 2
    gamma: float = 10.0
    geometry: str = "uca10"
    stft: STFTConfig = field(default_factory=STFTConfig)
    hidden: Optional[int] = None
    predictor_sharing: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigException("unknown model kind {}".format(self.kind))
        if self.n_sources < 1:
            raise ConfigException("n_sources must be >= 1")
        if self.input_kind == "phase" and self.num_mics not in CNN_SPECS:
            raise ConfigException(
                "no LocNet-CNN layout for {} microphones (supported: {})".format(
                    self.num_mics, sorted(CNN_SPECS)
                )
            )

    @property
    def grid(self) -> AngularGrid:
        """Output classes."""
        return AngularGrid(self.gamma)

    @property
    def num_mics(self) -> int:
        """M"""
        return geometry_by_name(self.geometry).num_mics

    @property
    def num_freqs(self) -> int:
        """F"""
        return self.stft.n_freqs

    @property
    def hidden_size(self) -> int:
        """Q, twice the number of classes unless set explicitly."""
        return self.hidden if self.hidden is not None else 2 * self.grid.size

    @property
    def shares_predictor(self) -> bool:
        """Whether all sources use one output layer."""
        if self.predictor_sharing is None:
            return SHARED_PREDICTOR_DEFAULT[self.kind]
        return self.predictor_sharing

    @property
    def input_kind(self) -> str:
        """'ipd' for map_split_r, 'phase' otherwise."""
        return "ipd" if self.kind == "map_split_r" else "phase"

    @property
    def ipd_dim(self) -> int:
        """Width of the IPD feature vector, 2*I*F + F."""
        pairs = geometry_by_name(self.geometry).num_pairs
        return (2 * pairs + 1) * self.num_freqs

    def to_dict(self) -> dict:
        """JSON-ready representation."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        """Inverse of to_dict."""
        data = dict(data)
        data["stft"] = STFTConfig(**data.get("stft", {}))
        return cls(**data)


class LocNetCNN(nn.Module):
    """Per-frame convolution over (microphone, frequency) pooling the channels into a T x Q phase map."""

    def __init__(self, num_mics: int, num_freqs: int, hidden: int):
        super().__init__()
        self.num_mics = num_mics
        blocks = []
        in_maps = 1
        for (kernel_mic, kernel_freq), maps in CNN_SPECS[num_mics]:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_maps, maps, (kernel_mic, kernel_freq), padding=(0, kernel_freq // 2)),
                    nn.ReLU(),
                )
            )
            in_maps = maps
        self.blocks = nn.ModuleList(blocks)
        self.output = nn.Linear(in_maps * num_freqs, hidden)

    def forward(self, phase: torch.Tensor) -> torch.Tensor:
        if phase.dim() != 4 or phase.shape[2] != self.num_mics:
            raise SignalException("phase input must be (B, T, {}, F), got {}".format(self.num_mics, tuple(phase.shape)))
        batch, frames, mics, freqs = phase.shape
        hidden = phase.reshape(batch * frames, 1, mics, freqs)
        for block in self.blocks:
            hidden = block(hidden)
        return self.output(hidden.reshape(batch, frames, -1))


class BLSTMP(nn.Module):
    """Bidirectional LSTM whose forward and backward outputs are projected separately, concatenated and squashed."""

    def __init__(self, input_size: int, cells: int):
        super().__init__()
        self.cells = cells
        self.lstm = nn.LSTM(input_size, cells, batch_first=True, bidirectional=True)
        self.project_forward = nn.Linear(cells, cells)
        self.project_backward = nn.Linear(cells, cells)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        outputs, _ = self.lstm(inputs)
        forward, backward = outputs[..., : self.cells], outputs[..., self.cells :]
        return torch.tanh(torch.cat([self.project_forward(forward), self.project_backward(backward)], dim=-1))


def masked_average(phase_map: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Mask weighted time average: (B, T, Q) map and (B, T, N, Q) masks give (B, N, Q)."""
    numerator = torch.einsum("btnq,btq->bnq", masks, phase_map)
    return numerator / (masks.sum(dim=1) + MASK_GUARD)


class DoaModel(nn.Module):
    """Common plumbing: output layers and the forget-gate initialisation."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        hidden = config.hidden_size
        classes = config.grid.size
        if config.kind == "mlc":
            count = 0
        else:
            count = 1 if config.shares_predictor else config.n_sources
        self.predictors = nn.ModuleList([nn.Linear(hidden, classes) for _ in range(count)])

    def predict(self, summaries: torch.Tensor) -> torch.Tensor:
        """Softmax posteriors from per-source summaries (B, N, Q)."""
        if len(self.predictors) == 1:
            logits = self.predictors[0](summaries)
        else:
            logits = torch.stack([layer(summaries[:, n]) for n, layer in enumerate(self.predictors)], dim=1)
        return torch.softmax(logits, dim=-1)

    def init_forget_gates(self, value: float = 1.0):
        """Set every LSTM forget-gate bias to `value` (split over the two bias vectors)."""
        for module in self.modules():
            if isinstance(module, nn.LSTM):
                for name, parameter in module.named_parameters():
                    if name.startswith("bias_"):
                        size = parameter.shape[0] // 4
                        with torch.no_grad():
                            parameter[size : 2 * size] = value if name.startswith("bias_ih") else 0.0


class MLC(DoaModel):
    """Multi-label classifier over all sources at once."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        hidden = config.hidden_size
        self.locnet = LocNetCNN(config.num_mics, config.num_freqs, hidden)
        self.affine1 = nn.Linear(hidden, hidden)
        self.affine2 = nn.Linear(hidden, config.grid.size)

    def forward(self, phase: torch.Tensor) -> torch.Tensor:
        summary = torch.relu(self.affine1(self.locnet(phase))).mean(dim=1)
        return torch.sigmoid(self.affine2(summary))


class MapSplitC(DoaModel):
    """Source-specific affine branches on the CNN phase map, time averaged."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        hidden = config.hidden_size
        self.locnet = LocNetCNN(config.num_mics, config.num_freqs, hidden)
        self.branches = nn.ModuleList([nn.Linear(hidden, hidden) for _ in range(config.n_sources)])

    def forward(self, phase: torch.Tensor) -> torch.Tensor:
        phase_map = self.locnet(phase)
        summaries = torch.stack([torch.relu(branch(phase_map)).mean(dim=1) for branch in self.branches], dim=1)
        return self.predict(summaries)


class MaskSplit(DoaModel):
    """Recurrent ratio masks pooling the CNN phase map once per source."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        hidden = config.hidden_size
        self.locnet = LocNetCNN(config.num_mics, config.num_freqs, hidden)
        self.masker = BLSTMP(hidden, hidden)
        self.mask_output = nn.Linear(2 * hidden, config.n_sources * hidden)
        self.init_forget_gates()

    def masks(self, phase_map: torch.Tensor) -> torch.Tensor:
        """Source-specific masks in (0, 1), shape (B, T, N, Q)."""
        batch, frames, hidden = phase_map.shape
        logits = self.mask_output(self.masker(phase_map))
        return torch.sigmoid(logits).reshape(batch, frames, self.config.n_sources, hidden)

    def forward(self, phase: torch.Tensor) -> torch.Tensor:
        phase_map = self.locnet(phase)
        return self.predict(masked_average(phase_map, self.masks(phase_map)))


class MapSplitR(DoaModel):
    """BLSTMP source splitter on IPD features."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        hidden = config.hidden_size
        self.splitter = BLSTMP(config.ipd_dim, hidden)
        self.map_output = nn.Linear(2 * hidden, config.n_sources * hidden)
        self.init_forget_gates()

    def maps(self, ipd: torch.Tensor) -> torch.Tensor:
        """Source-specific feature maps in (0, 1), shape (B, T, N, Q)."""
        if ipd.dim() != 3 or ipd.shape[-1] != self.config.ipd_dim:
            raise SignalException("IPD input must be (B, T, {}), got {}".format(self.config.ipd_dim, tuple(ipd.shape)))
        batch, frames, _ = ipd.shape
        logits = self.map_output(self.splitter(ipd))
        return torch.sigmoid(logits).reshape(batch, frames, self.config.n_sources, -1)

    def forward(self, ipd: torch.Tensor) -> torch.Tensor:
        return self.predict(self.maps(ipd).mean(dim=1))


MODEL_CLASSES = {"mlc": MLC, "map_split_c": MapSplitC, "mask_split": MaskSplit, "map_split_r": MapSplitR}


def build_model(config: ModelConfig, seed: int = 0) -> DoaModel:
    """Instantiate the network of `config` with seeded fan-in uniform initialisation.

    The global torch random state is left as it was.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = MODEL_CLASSES[config.kind](config)
    _LOGGER.debug(
        "Built %s with %d parameters (Q=%d, %d classes)",
        config.kind,
        sum(p.numel() for p in model.parameters()),
        config.hidden_size,
        config.grid.size,
    )
    return model
