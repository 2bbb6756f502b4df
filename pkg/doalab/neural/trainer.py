"""Deterministic Adam training of the DOA models on a simulated manifest."""

import copy
import csv
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
from torch.utils.data import DataLoader

from doalab.audio import atomic_write
from doalab.config import TrainConfig
from doalab.evaluation import cyclic_mae
from doalab.exceptions import ConfigException, SignalException, TrainingDivergedException
from doalab.neural.checkpoint import save_checkpoint
from doalab.neural.data import ManifestDataset, collate_shortest
from doalab.neural.inference import decode
from doalab.neural.losses import batch_fixed_order_loss, batch_pit_loss, loss
from doalab.neural.models import DoaModel, ModelConfig, build_model
from doalab.sim import DatasetManifest

_LOGGER = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "train_loss", "dev_loss", "dev_mae_deg"]


@dataclass
class EpochLog:
    """Summary of one epoch."""

    epoch: int
    train_loss: float
    dev_loss: Optional[float]
    dev_mae_deg: Optional[float]


@dataclass
class TrainingResult:
    """Trained model and its history."""

    model: DoaModel
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: Optional[int] = None


def criterion(model_config: ModelConfig, train_config: TrainConfig, predictions, targets) -> torch.Tensor:
    """Batch loss: multi-label for MLC, permutation invariant or fixed-order for splitting models."""
    if model_config.kind == "mlc":
        return loss(train_config.loss, predictions, targets).mean()
    if train_config.pit:
        return batch_pit_loss(train_config.loss, predictions, targets)
    return batch_fixed_order_loss(train_config.loss, predictions, targets)


def write_log(path, history: List[EpochLog]):
    """Rewrite the CSV training log."""
    def cell(value):
        return "" if value is None else "{:.6f}".format(value)

    with atomic_write(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(LOG_COLUMNS)
        for entry in history:
            writer.writerow([entry.epoch, cell(entry.train_loss), cell(entry.dev_loss), cell(entry.dev_mae_deg)])


class Trainer:
    """Trains one model configuration with one training recipe."""

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, seed: int = 0):
        if model_config.kind == "mlc" and train_config.loss != "bce":
            raise ConfigException("the mlc model is trained with the bce loss, not {}".format(train_config.loss))
        self.model_config = model_config
        self.train_config = train_config
        self.seed = seed

    def _loader(self, dataset, shuffle, generator=None):
        return DataLoader(
            dataset,
            batch_size=self.train_config.batch_size if shuffle else 1,
            shuffle=shuffle,
            generator=generator,
            num_workers=0,
            collate_fn=collate_shortest,
        )

    def step(self, model, optimizer, features, targets) -> torch.Tensor:
        """One optimiser update; returns the batch loss."""
        optimizer.zero_grad()
        value = criterion(self.model_config, self.train_config, model(features), targets)
        if not torch.isfinite(value):
            return value
        value.backward()
        if self.train_config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), self.train_config.grad_clip)
        optimizer.step()
        return value

    def evaluate(self, model, dataset) -> tuple:
        """(mean loss, corpus cyclic MAE) over full utterances."""
        model.eval()
        losses, errors = [], []
        grid = self.model_config.grid
        with torch.no_grad():
            for index in range(len(dataset)):
                features, target = dataset[index]
                prediction = model(features.unsqueeze(0))
                losses.append(float(criterion(self.model_config, self.train_config, prediction, target.unsqueeze(0))))
                angles = decode(prediction[0].double().numpy(), self.model_config.kind, grid,
                                len(dataset.records[index].doas_deg))
                errors.append(cyclic_mae(np.degrees(angles), dataset.records[index].doas_deg))
        model.train()
        return float(np.mean(losses)), float(np.mean(errors))

    def fit(self, manifest: DatasetManifest, checkpoint_path=None, log_path=None, metadata=None) -> TrainingResult:
        """Train on the train split, scoring the dev split after every epoch.

        The weights with the lowest dev MAE (earliest on ties) are kept; without
        a dev split the final weights are kept. The global random state, thread
        count and deterministic-algorithm setting of torch are restored on return.
        """
        deterministic = torch.are_deterministic_algorithms_enabled()
        warn_only = torch.is_deterministic_algorithms_warn_only_enabled()
        threads = torch.get_num_threads()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            torch.set_num_threads(self.train_config.threads)
            torch.use_deterministic_algorithms(True, warn_only=True)
            try:
                return self._fit(manifest, checkpoint_path, log_path, metadata)
            finally:
                torch.use_deterministic_algorithms(deterministic, warn_only=warn_only)
                torch.set_num_threads(threads)

    def _fit(self, manifest, checkpoint_path, log_path, metadata) -> TrainingResult:
        train_records, dev_records = manifest.split("train"), manifest.split("dev")
        if not train_records:
            raise SignalException("manifest {} has no training examples".format(manifest.path))
        n_sources = {len(record.doas_deg) for record in train_records + dev_records}
        if n_sources != {self.model_config.n_sources}:
            raise ConfigException(
                "model expects {} sources, manifest has {}".format(self.model_config.n_sources, sorted(n_sources))
            )
        train_set = ManifestDataset(manifest.root, train_records, self.model_config, self.train_config.loss,
                                    self.train_config.crop_seconds, self.seed)
        dev_set = ManifestDataset(manifest.root, dev_records, self.model_config, self.train_config.loss)
        generator = torch.Generator().manual_seed(self.seed)
        loader = self._loader(train_set, shuffle=True, generator=generator)

        model = build_model(self.model_config, self.seed)
        model.train()
        optimizer = torch.optim.Adam(model.parameters(), lr=self.train_config.learning_rate)
        result = TrainingResult(model)
        best_state, best_mae = None, math.inf
        last_finite = None

        for epoch in range(1, self.train_config.epochs + 1):
            train_set.set_epoch(epoch)
            total, batches = 0.0, 0
            for batch, (features, targets) in enumerate(loader, start=1):
                value = self.step(model, optimizer, features, targets)
                if not torch.isfinite(value):
                    raise TrainingDivergedException(
                        "non-finite loss at epoch {} batch {} (last finite loss {})".format(epoch, batch, last_finite)
                    )
                last_finite = value.detach().item()
                total += last_finite
                batches += 1
            dev_loss, dev_mae = self.evaluate(model, dev_set) if dev_records else (None, None)
            entry = EpochLog(epoch, total / batches, dev_loss, dev_mae)
            result.history.append(entry)
            _LOGGER.info(
                "Epoch %d/%d: train loss %.4f, dev loss %s, dev MAE %s",
                epoch,
                self.train_config.epochs,
                entry.train_loss,
                "-" if dev_loss is None else "{:.4f}".format(dev_loss),
                "-" if dev_mae is None else "{:.2f} deg".format(dev_mae),
            )
            if log_path is not None:
                write_log(log_path, result.history)
            if dev_mae is not None and dev_mae < best_mae:
                best_mae, best_state, result.best_epoch = dev_mae, copy.deepcopy(model.state_dict()), epoch

        if best_state is not None:
            model.load_state_dict(best_state)
        model.eval()
        if checkpoint_path is not None:
            info = {"seed": self.seed, "epochs": self.train_config.epochs, "best_epoch": result.best_epoch,
                    "loss": self.train_config.loss, "pit": self.train_config.pit}
            info.update(metadata or {})
            save_checkpoint(Path(checkpoint_path), model, info)
        return result
