"""Localisation and separation metrics and the experiment report."""

import csv
from dataclasses import dataclass
import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from doalab.audio import atomic_write
from doalab.exceptions import EvaluationException
from doalab.grid import cyclic_distance_deg

_LOGGER = logging.getLogger(__name__)

SISDR_CLAMP_DB = 60.0
SEPARATION_BINS = ((10, 20), (21, 45), (46, 90), (91, 180))
OTHER_BIN = "other"


def cyclic_mae(preds_deg: Sequence[float], refs_deg: Sequence[float]) -> float:
    """Mean cyclic error in degrees under the best matching of predictions to references."""
    preds = np.asarray(preds_deg, dtype=np.float64)
    refs = np.asarray(refs_deg, dtype=np.float64)
    if preds.shape != refs.shape or preds.ndim != 1:
        raise EvaluationException("{} predictions for {} references".format(preds.size, refs.size))
    if preds.size == 0:
        raise EvaluationException("cannot score an empty prediction")
    return float(
        min(cyclic_distance_deg(preds[list(perm)], refs).mean() for perm in itertools.permutations(range(preds.size)))
    )


def corpus_mae(results: Sequence["PredictionRecord"]) -> float:
    """Mean of the per-utterance cyclic MAE."""
    if not results:
        raise EvaluationException("no predictions to score")
    return float(np.mean([cyclic_mae(r.pred_deg, r.ref_deg) for r in results]))


def round_half_up(value: float) -> int:
    """Integer rounding with .5 going up."""
    return int(math.floor(value + 0.5))


def separation_bin(refs_deg: Sequence[float]) -> str:
    """Bin label ("10-20", ...) of a two-source reference pair, by rounded cyclic separation."""
    if len(refs_deg) != 2:
        raise EvaluationException("binning needs exactly two reference angles")
    separation = round_half_up(float(cyclic_distance_deg(refs_deg[0], refs_deg[1])))
    for low, high in SEPARATION_BINS:
        if low <= separation <= high:
            return "{}-{}".format(low, high)
    return OTHER_BIN


def binned_mae(results: Sequence["PredictionRecord"]) -> Dict[str, float]:
    """Corpus MAE per separation bin; bins without utterances are left out."""
    groups: Dict[str, list] = {}
    for result in results:
        groups.setdefault(separation_bin(result.ref_deg), []).append(result)
    order = ["{}-{}".format(low, high) for low, high in SEPARATION_BINS] + [OTHER_BIN]
    return {label: corpus_mae(groups[label]) for label in order if label in groups}


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, clamped to +-60 dB."""
    estimate = np.asarray(getattr(estimate, "samples", estimate), dtype=np.float64).ravel()
    reference = np.asarray(getattr(reference, "samples", reference), dtype=np.float64).ravel()
    if estimate.shape != reference.shape:
        raise EvaluationException("estimate and reference lengths differ")
    energy = float(reference @ reference)
    if energy == 0:
        raise EvaluationException("reference signal is silent")
    target = (estimate @ reference) / energy * reference
    residual = estimate - target
    target_power, residual_power = float(target @ target), float(residual @ residual)
    if target_power == 0:
        return -SISDR_CLAMP_DB
    if residual_power == 0:
        return SISDR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(target_power / residual_power), -SISDR_CLAMP_DB, SISDR_CLAMP_DB))


@dataclass
class PredictionRecord:
    """One line of a predictions file."""

    id: str
    pred_deg: List[float]
    ref_deg: List[float]
    split: str = "test"
    method: str = ""
    gamma: Optional[float] = None
    loss: Optional[str] = None
    pit: Optional[bool] = None


@dataclass
class ReportRow:
    """One row of the results table."""

    method: str
    gamma: Optional[float]
    loss: Optional[str]
    pit: Optional[bool]
    dev_mae: Optional[float]
    test_mae: Optional[float]

    def cells(self) -> List[str]:
        """Formatted cells in column order."""
        def number(value, fmt):
            return "-" if value is None else fmt.format(value)

        return [
            self.method,
            number(self.gamma, "{:g}"),
            self.loss or "-",
            "-" if self.pit is None else ("yes" if self.pit else "no"),
            number(self.dev_mae, "{:.2f}"),
            number(self.test_mae, "{:.2f}"),
        ]


REPORT_COLUMNS = ["method", "gamma", "loss", "pit", "dev_mae", "test_mae"]


def build_report(records: Sequence[PredictionRecord]) -> List[ReportRow]:
    """Group predictions by (method, gamma, loss, pit) in first-seen order and score each split."""
    groups: Dict[tuple, Dict[str, list]] = {}
    for record in records:
        key = (record.method, record.gamma, record.loss, record.pit)
        groups.setdefault(key, {}).setdefault(record.split, []).append(record)
    rows = []
    for (method, gamma, loss, pit), splits in groups.items():
        rows.append(
            ReportRow(
                method=method,
                gamma=gamma,
                loss=loss,
                pit=pit,
                dev_mae=corpus_mae(splits["dev"]) if "dev" in splits else None,
                test_mae=corpus_mae(splits["test"]) if "test" in splits else None,
            )
        )
    return rows


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned text table with a dashed rule under the header."""
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = ["  ".join(str(cell).ljust(width) for cell, width in zip(line, widths)).rstrip()
             for line in [header] + list(rows)]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)


def report_table(rows: Sequence[ReportRow]) -> str:
    """Aligned text rendering of the report."""
    return format_table(REPORT_COLUMNS, [row.cells() for row in rows])


def write_report_csv(path, rows: Sequence[ReportRow]):
    """CSV rendering of the report."""
    with atomic_write(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(row.cells())
    _LOGGER.info("Wrote report to %s", path)


def separation_scores(
    outputs, clean_images, mixture, ref_mic: int = 2, baseline_mic: Optional[int] = None
) -> List[dict]:
    """SI-SDR of separated outputs against the clean images at the reference microphone.

    Outputs are matched to sources by the assignment with the largest summed
    SI-SDR. The baseline scores mixture channel `baseline_mic` (1-based,
    `ref_mic` by default) against the same references.
    """
    if len(outputs) != len(clean_images):
        raise EvaluationException("{} outputs for {} sources".format(len(outputs), len(clean_images)))
    if baseline_mic is None:
        baseline_mic = ref_mic
    references = [np.asarray(image.samples[ref_mic - 1]) for image in clean_images]
    baseline_channel = np.asarray(mixture.samples[baseline_mic - 1])
    table = np.array([[si_sdr(np.asarray(output.samples[0]), reference) for reference in references]
                      for output in outputs])
    best = max(itertools.permutations(range(len(outputs))),
               key=lambda perm: sum(table[perm[n], n] for n in range(len(references))))
    scores = []
    for source, reference in enumerate(references):
        baseline = si_sdr(baseline_channel, reference)
        value = float(table[best[source], source])
        scores.append({
            "source": source,
            "output": int(best[source]),
            "sisdr_db": value,
            "baseline_db": baseline,
            "improvement_db": value - baseline,
        })
    return scores
