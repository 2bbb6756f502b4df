"""
Training targets, classification losses and permutation handling.

Losses take probabilities (softmax or sigmoid outputs) of shape (..., K) and
return one value per leading index; callers reduce.
"""

import itertools
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
import torch

from doalab.config import LOSS_KINDS
from doalab.exceptions import ConfigException, SignalException

LOG_FLOOR = 1e-12
SOFT_WEIGHTS = (0.4, 0.2, 0.1)
EXHAUSTIVE_PIT_LIMIT = 4


def one_hot(index: int, size: int) -> np.ndarray:
    """Unit vector at `index`."""
    target = np.zeros(size)
    target[index] = 1.0
    return target


def multi_hot(indices: Sequence[int], size: int) -> np.ndarray:
    """Ones at every class in `indices`."""
    target = np.zeros(size)
    target[np.asarray(indices, dtype=np.int64)] = 1.0
    return target


def soft_target(index: int, size: int) -> np.ndarray:
    """Smoothed target: 0.4 at the class, 0.2 one class away and 0.1 two classes away, cyclically."""
    if size < 5:
        raise ConfigException("soft targets need at least five classes, got {}".format(size))
    if not 0 <= index < size:
        raise SignalException("class index {} outside [0, {})".format(index, size))
    target = np.zeros(size)
    target[index] = SOFT_WEIGHTS[0]
    for step in (1, 2):
        target[(index - step) % size] = SOFT_WEIGHTS[step]
        target[(index + step) % size] = SOFT_WEIGHTS[step]
    return target


def target_vector(kind: str, index: int, size: int) -> np.ndarray:
    """Single-source target for a loss kind: soft for sce/semd, one-hot otherwise."""
    if kind in ("sce", "semd"):
        return soft_target(index, size)
    return one_hot(index, size)


def fixed_order_targets(doas_deg: Sequence[float]) -> np.ndarray:
    """Target angles sorted ascending in degrees; equal angles keep their order."""
    doas = np.asarray(doas_deg, dtype=np.float64)
    return doas[np.argsort(doas, kind="stable")]


def cross_entropy(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """-sum_i t_i log p_i"""
    return -(target * torch.log(torch.clamp(prediction, min=LOG_FLOOR))).sum(dim=-1)


def binary_cross_entropy(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Elementwise binary cross-entropy averaged over classes."""
    positive = torch.log(torch.clamp(prediction, min=LOG_FLOOR))
    negative = torch.log(torch.clamp(1.0 - prediction, min=LOG_FLOOR))
    return -(target * positive + (1.0 - target) * negative).mean(dim=-1)


def earth_mover(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Squared distance between the cumulative distributions."""
    return ((torch.cumsum(prediction, dim=-1) - torch.cumsum(target, dim=-1)) ** 2).sum(dim=-1)


_LOSSES = {
    "bce": binary_cross_entropy,
    "ce": cross_entropy,
    "sce": cross_entropy,
    "emd": earth_mover,
    "semd": earth_mover,
}


def loss(kind: str, prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Loss of `kind` between matching (..., K) prediction and target tensors."""
    if kind not in LOSS_KINDS:
        raise ConfigException("unknown loss {}".format(kind))
    if prediction.shape != target.shape:
        raise SignalException("prediction {} and target {} differ in shape".format(
            tuple(prediction.shape), tuple(target.shape)))
    return _LOSSES[kind](prediction, target)


def pair_loss_matrix(kind: str, predictions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Entry [..., i, j] is the loss of prediction i against target j; inputs (..., N, K)."""
    return _LOSSES[kind](predictions.unsqueeze(-2), targets.unsqueeze(-3))


def pit_loss(matrix) -> Tuple[torch.Tensor, Tuple[int, ...]]:
    """Smallest summed loss over one-to-one assignments and the assignment itself.

    `perm[i]` is the target matched with prediction i. All N! assignments are
    searched for N <= 4, in lexicographic order so that ties keep the first;
    larger N use the Hungarian algorithm.
    """
    matrix = torch.as_tensor(matrix)
    if matrix.dim() != 2 or matrix.shape[0] != matrix.shape[1]:
        raise SignalException("PIT needs a square loss matrix, got shape {}".format(tuple(matrix.shape)))
    size = matrix.shape[0]
    rows = torch.arange(size)
    if size > EXHAUSTIVE_PIT_LIMIT:
        _, cols = linear_sum_assignment(matrix.detach().cpu().numpy())
        perm = tuple(int(c) for c in cols)
        return matrix[rows, torch.as_tensor(perm)].sum(), perm
    best_value, best_perm = None, None
    for perm in itertools.permutations(range(size)):
        value = matrix[rows, torch.as_tensor(perm)].sum()
        if best_value is None or value < best_value:
            best_value, best_perm = value, perm
    return best_value, best_perm


def batch_pit_loss(kind: str, predictions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the per-example PIT loss; inputs (B, N, K)."""
    matrices = pair_loss_matrix(kind, predictions, targets)
    size = matrices.shape[-1]
    rows = torch.arange(size)
    if size > EXHAUSTIVE_PIT_LIMIT:
        return torch.stack([pit_loss(matrix)[0] for matrix in matrices]).mean()
    perms = torch.as_tensor(list(itertools.permutations(range(size))))
    # (B, P) summed loss of every assignment
    totals = matrices[:, rows.unsqueeze(0), perms].sum(dim=-1)
    return totals.min(dim=1).values.mean()


def batch_fixed_order_loss(kind: str, predictions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the summed loss with prediction n scored against target n."""
    return loss(kind, predictions, targets).sum(dim=-1).mean()
