"""Command line interface: simulate, train, estimate, beamform, evaluate and spectrum."""

import argparse
from dataclasses import asdict, replace
import json
import logging
import os
from pathlib import Path
import sys
from typing import List, Optional

import numpy as np

from doalab import __version__
from doalab.audio import atomic_write, read_wav, write_wav
from doalab.config import GEOMETRY_NAMES, LOSS_KINDS, MODEL_KINDS, ExperimentRow, load_config
from doalab.dsp import geometry_by_name, stft
from doalab.evaluation import (
    PredictionRecord,
    binned_mae,
    build_report,
    format_table,
    report_table,
    separation_bin,
    separation_scores,
    write_report_csv,
)
from doalab.exceptions import (
    AudioFormatException,
    CheckpointException,
    ConfigException,
    DoaLabException,
    TrainingDivergedException,
)
from doalab.frontend import scm_from_mask, separate
from doalab.grid import AngularGrid
from doalab.neural import DoaEstimator, ModelConfig, Trainer, load_checkpoint
from doalab.sim import DatasetManifest, dataset_generate, oracle_masks
from doalab.subspace import SUBSPACE_METHODS, pick_peaks

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_AUDIO = 5
EXIT_DIVERGED = 6
EXIT_CHECKPOINT = 7

DATA_DIR_ENV = "DOALAB_DATA_DIR"


def on_off(value: str) -> bool:
    """Parse an on/off switch."""
    lowered = value.lower()
    if lowered not in ("on", "off"):
        raise argparse.ArgumentTypeError('expected "on" or "off", got "{}"'.format(value))
    return lowered == "on"


def snr_value(value: str) -> float:
    """Parse an SNR in dB; "inf" disables noise."""
    try:
        return float(value)
    except ValueError as err:
        raise argparse.ArgumentTypeError('"{}" is not a number'.format(value)) from err


def _require_file(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("no such file: {}".format(path))
    return path


def _data_root(args) -> Path:
    root = args.root or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise ConfigException("no dataset root: pass --root or set {}".format(DATA_DIR_ENV))
    return Path(root)


def _settings(args):
    """Configuration file merged with the command line overrides."""
    config = load_config(_require_file(args.config) if args.config else None)
    simulation, model, train = config.simulation, config.model, config.train
    if getattr(args, "geometry", None):
        simulation = replace(simulation, geometry=args.geometry)
    if getattr(args, "fixed_snr", None) is not None:
        simulation = replace(simulation, fixed_snr_db=args.fixed_snr)
    if getattr(args, "workers", None):
        simulation = replace(simulation, workers=args.workers)
    if getattr(args, "model", None):
        model = replace(model, kind=args.model)
    if getattr(args, "command", None) == "train" and args.gamma is not None:
        model = replace(model, gamma=args.gamma)
    if getattr(args, "predictor_sharing", None) is not None:
        model = replace(model, predictor_sharing=args.predictor_sharing)
    if getattr(args, "loss", None):
        train = replace(train, loss=args.loss)
    if getattr(args, "pit", None) is not None:
        train = replace(train, pit=args.pit)
    if getattr(args, "epochs", None):
        train = replace(train, epochs=args.epochs)
    return replace(config, simulation=simulation, model=model, train=train)


def _read_manifest(args) -> DatasetManifest:
    root = _data_root(args)
    manifest = DatasetManifest.read(root)
    manifest.validate()
    return manifest


def _manifest_geometry(records) -> str:
    names = {record.geometry for record in records}
    if len(names) != 1:
        raise ConfigException("dataset mixes array geometries: {}".format(sorted(names)))
    return names.pop()


def simulate(args):
    """Generate a dataset and its manifest."""
    config = _settings(args)
    manifest = dataset_generate(config.simulation, args.seed, _data_root(args))
    print("Wrote {} mixtures to {}".format(len(manifest.records), manifest.path))


def experiment_name(model, train) -> str:
    """Default name of a run: model, resolution, loss and PIT flag."""
    return "{}_g{:g}_{}{}".format(model.kind, model.gamma, train.loss, "_pit" if train.pit else "")


def train(args):
    """Train one model, or every row of the config's experiment grid."""
    config = _settings(args)
    manifest = _read_manifest(args)
    geometry = _manifest_geometry(manifest.records)
    if args.geometry and args.geometry != geometry:
        raise ConfigException("dataset was simulated for {}, not {}".format(geometry, args.geometry))
    n_sources = len(manifest.records[0].doas_deg) if manifest.records else config.simulation.n_sources
    out_dir = Path(args.out) if args.out else manifest.root / "models"

    rows: List[Optional[ExperimentRow]] = list(config.experiments) or [None]
    for row in rows:
        model, recipe = (config.model, config.train) if row is None else row.apply(config.model, config.train)
        if row is not None and args.epochs:
            recipe = replace(recipe, epochs=args.epochs)
        name = (args.name or experiment_name(model, recipe)) if row is None else row.name
        model_config = ModelConfig(
            kind=model.kind,
            n_sources=n_sources,
            gamma=model.gamma,
            geometry=geometry,
            stft=config.stft,
            hidden=model.hidden,
            predictor_sharing=model.predictor_sharing,
        )
        _LOGGER.info("Training %s", name)
        result = Trainer(model_config, recipe, seed=args.seed).fit(
            manifest,
            checkpoint_path=out_dir / "{}.ckpt".format(name),
            log_path=out_dir / "{}.csv".format(name),
            metadata={"name": name},
        )
        final = result.history[-1]
        print("{}: train loss {:.4f}, best epoch {}".format(name, final.train_loss, result.best_epoch))


def _inputs(args):
    """(id, split, waveform, reference degrees, geometry name) for every requested recording."""
    if args.wav:
        for path in args.wav:
            yield Path(path).stem, "", read_wav(_require_file(path)), [], args.geometry or "uca10"
        return
    manifest = _read_manifest(args)
    records = manifest.split(args.split)
    if args.id:
        records = [record for record in records if record.id in set(args.id)]
    for record in records:
        yield record.id, record.split, read_wav(manifest.root / record.mixture), record.doas_deg, record.geometry


def _subspace_angles(args, waveform, geometry_name, n_sources, config):
    spectrogram = stft(waveform, config.stft)
    grid = AngularGrid(args.gamma if args.gamma is not None else 1.0)
    spectrum = SUBSPACE_METHODS[args.method](spectrogram, geometry_by_name(geometry_name), grid, n_sources)
    return spectrum, pick_peaks(spectrum, n_sources)


def estimate(args):
    """Write one JSON line of predicted and reference azimuths per recording."""
    config = _settings(args)
    if bool(args.checkpoint) == bool(args.method):
        raise ConfigException("estimate needs exactly one of --checkpoint or --method")
    estimator, metadata = None, {}
    if args.checkpoint:
        model, metadata = load_checkpoint(_require_file(args.checkpoint))
        estimator = DoaEstimator(model)
    elif args.chunked:
        _LOGGER.warning("--chunked applies to trained models only; subspace spectra use the whole utterance")

    lines = []
    for example_id, split, waveform, refs, geometry_name in _inputs(args):
        n_sources = len(refs) or args.n_sources
        if estimator is not None:
            if n_sources != estimator.config.n_sources:
                raise ConfigException("model estimates {} sources, {} has {}".format(
                    estimator.config.n_sources, example_id, n_sources))
            angles = estimator.chunked_estimate(waveform) if args.chunked else estimator.estimate(waveform)
            record = PredictionRecord(
                id=example_id,
                pred_deg=[],
                ref_deg=list(refs),
                split=split,
                method=metadata.get("name", estimator.config.kind) + ("_chunked" if args.chunked else ""),
                gamma=estimator.config.gamma,
                loss=metadata.get("loss"),
                pit=metadata.get("pit"),
            )
        else:
            _, angles = _subspace_angles(args, waveform, geometry_name, n_sources, config)
            record = PredictionRecord(example_id, [], list(refs), split, args.method,
                                      args.gamma if args.gamma is not None else 1.0)
        record.pred_deg = [round(float(v), 6) for v in np.mod(np.degrees(angles), 360.0)]
        lines.append(json.dumps(asdict(record), sort_keys=True))
    _write_lines(args.out, lines)


def _write_lines(path, lines):
    if path:
        with atomic_write(path, "w", encoding="utf-8", newline="\n") as stream:
            stream.write("".join(line + "\n" for line in lines))
        _LOGGER.info("Wrote %d lines to %s", len(lines), path)
    else:
        for line in lines:
            print(line)


def _read_jsonl(path) -> List[dict]:
    with open(_require_file(path), encoding="utf-8") as stream:
        try:
            return [json.loads(line) for line in stream if line.strip()]
        except ValueError as err:
            raise ConfigException("{} is not valid JSON lines: {}".format(path, err)) from err


def beamform(args):
    """Separate every mixture of a split with MVDR and score the outputs with SI-SDR."""
    config = _settings(args)
    manifest = _read_manifest(args)
    if bool(args.predictions) + args.oracle_masks + args.oracle_doas != 1:
        raise ConfigException("choose one mask source: --predictions, --oracle-masks or --oracle-doas")
    predictions = {}
    if args.predictions:
        predictions = {line["id"]: line["pred_deg"] for line in _read_jsonl(args.predictions)}
    source = "predictions" if args.predictions else ("oracle_masks" if args.oracle_masks else "oracle_doas")
    out_dir = Path(args.out) if args.out else manifest.root / "separated"

    records = manifest.split(args.split)
    if args.limit:
        records = records[: args.limit]
    lines = []
    for record in records:
        example = manifest.load(record)
        geometry = example.room.geometry
        doas, masks = None, None
        if args.oracle_masks:
            masks = oracle_masks(example, config.stft, args.ref_mic)
        elif args.oracle_doas:
            doas = example.doas
        else:
            if record.id not in predictions:
                _LOGGER.warning("No prediction for %s; skipped", record.id)
                continue
            doas = np.radians(predictions[record.id])
        noise_scm = None
        if args.noise_scm:
            if example.noise is None:
                raise ConfigException("{} has no stored noise; simulate with keep_noise".format(record.id))
            noise_scm = scm_from_mask(stft(example.noise, config.stft))
        outputs = separate(
            example.mixture,
            geometry,
            doas=doas,
            masks=masks,
            ref_mic=args.ref_mic,
            config=config.stft,
            noise_scm=noise_scm,
            condition_csv=str(Path(args.condition_csv) / record.id) if args.condition_csv else None,
        )
        for index, output in enumerate(outputs):
            write_wav(out_dir / "{}_src{}.wav".format(record.id, index), output)
        scores = separation_scores(outputs, example.clean_images, example.mixture, args.ref_mic)
        for score in scores:
            score.update({"id": record.id, "masks": source})
            lines.append(json.dumps(score, sort_keys=True))
    _write_lines(out_dir / "sisdr.jsonl", lines)


def evaluate(args):
    """Print (and optionally save) the results table of one or more prediction files."""
    records = []
    for path in args.predictions or []:
        for line in _read_jsonl(path):
            records.append(PredictionRecord(**line))
    if records:
        rows = build_report(records)
        print(report_table(rows))
        if args.out:
            write_report_csv(args.out, rows)
    if args.binned:
        table = []
        methods = []
        for record in records:
            if record.method not in methods:
                methods.append(record.method)
        for method in methods:
            for split in ("dev", "test"):
                subset = [r for r in records if r.method == method and r.split == split]
                for label, value in (binned_mae(subset).items() if subset else []):
                    count = sum(1 for r in subset if separation_bin(r.ref_deg) == label)
                    table.append([method, split, label, str(count), "{:.2f}".format(value)])
        print()
        print(format_table(["method", "split", "bin", "count", "mae"], table))
    if args.sisdr:
        table = []
        for path in args.sisdr:
            scores = _read_jsonl(path)
            if not scores:
                continue
            table.append([
                str(path),
                scores[0].get("masks", ""),
                str(len(scores)),
                "{:.2f}".format(np.mean([s["sisdr_db"] for s in scores])),
                "{:.2f}".format(np.mean([s["improvement_db"] for s in scores])),
            ])
        print()
        print(format_table(["file", "masks", "sources", "si_sdr_db", "improvement_db"], table))


def spectrum(args):
    """Dump subspace spectra as CSV files."""
    config = _settings(args)
    out_dir = Path(args.out)
    for example_id, _, waveform, refs, geometry_name in _inputs(args):
        spatial, angles = _subspace_angles(args, waveform, geometry_name, len(refs) or args.n_sources, config)
        spatial.write_csv(out_dir / "{}.{}.csv".format(example_id, args.method))
        _LOGGER.info("%s: peaks at %s deg", example_id, np.round(np.degrees(angles), 1).tolist())


def _add_common(parser):
    parser.add_argument("--config", help="YAML experiment configuration")
    parser.add_argument("--seed", type=int, default=0, help="seed of all random draws")
    parser.add_argument("--root", help="dataset root (default: ${})".format(DATA_DIR_ENV))


def _add_recordings(parser):
    parser.add_argument("--split", default="test", choices=["train", "dev", "test"])
    parser.add_argument("--id", action="append", help="restrict to these example ids")
    parser.add_argument("--wav", action="append", help="analyse a WAV file instead of a dataset split")
    parser.add_argument("--geometry", choices=GEOMETRY_NAMES, help="array of the --wav recordings")
    parser.add_argument("--n-sources", type=int, default=2, help="source count for --wav recordings")
    parser.add_argument("--gamma", type=float, help="grid resolution of subspace spectra in degrees (default 1)")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per task."""
    parser = argparse.ArgumentParser(prog="doalab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_const", const=True, help="debug logging")
    parser.add_argument("--version", action="version", version="%(prog)s {}".format(__version__))
    subparsers = parser.add_subparsers(dest="command", help="sub-command help")

    parser_simulate = subparsers.add_parser("simulate", help="simulate a labelled dataset")
    _add_common(parser_simulate)
    parser_simulate.add_argument("--geometry", choices=GEOMETRY_NAMES)
    parser_simulate.add_argument(
        "--fixed-snr", type=snr_value, help="use this SNR in dB for every mixture (inf: no noise)"
    )
    parser_simulate.add_argument("--workers", type=int, help="parallel worker processes")
    parser_simulate.set_defaults(func=simulate)

    parser_train = subparsers.add_parser("train", help="train a model or the configured experiment grid")
    _add_common(parser_train)
    parser_train.add_argument("--geometry", choices=GEOMETRY_NAMES)
    parser_train.add_argument("--model", choices=MODEL_KINDS)
    parser_train.add_argument("--loss", choices=LOSS_KINDS)
    parser_train.add_argument("--gamma", type=float, help="angular resolution in degrees")
    parser_train.add_argument("--pit", type=on_off, help="permutation invariant training (on|off)")
    parser_train.add_argument("--predictor-sharing", type=on_off, help="one output layer for all sources (on|off)")
    parser_train.add_argument("--epochs", type=int)
    parser_train.add_argument("--name", help="run name (default derived from the settings)")
    parser_train.add_argument("--out", help="directory for checkpoints and logs (default: <root>/models)")
    parser_train.set_defaults(func=train)

    parser_estimate = subparsers.add_parser("estimate", help="estimate source directions")
    _add_common(parser_estimate)
    _add_recordings(parser_estimate)
    parser_estimate.add_argument("--checkpoint", help="trained model")
    parser_estimate.add_argument("--method", choices=sorted(SUBSPACE_METHODS), help="subspace baseline instead")
    parser_estimate.add_argument("--chunked", action="store_true", help="median over 100 ms chunks, 50%% overlap")
    parser_estimate.add_argument("--out", help="JSON-lines output (default: stdout)")
    parser_estimate.set_defaults(func=estimate)

    parser_beamform = subparsers.add_parser("beamform", help="separate mixtures with mask based MVDR")
    _add_common(parser_beamform)
    parser_beamform.add_argument("--split", default="test", choices=["train", "dev", "test"])
    parser_beamform.add_argument("--predictions", help="JSON-lines predictions driving angle-feature masks")
    parser_beamform.add_argument("--oracle-masks", action="store_true", help="ideal binary masks")
    parser_beamform.add_argument("--oracle-doas", action="store_true", help="angle-feature masks from true DOAs")
    parser_beamform.add_argument("--ref-mic", type=int, default=2, help="1-based reference microphone")
    parser_beamform.add_argument("--noise-scm", action="store_true", help="use the stored noise covariance")
    parser_beamform.add_argument("--condition-csv", help="directory for per-frequency condition numbers")
    parser_beamform.add_argument("--limit", type=int, help="only the first N mixtures")
    parser_beamform.add_argument("--out", help="output directory (default: <root>/separated)")
    parser_beamform.set_defaults(func=beamform)

    parser_evaluate = subparsers.add_parser("evaluate", help="score predictions and separations")
    parser_evaluate.add_argument("--predictions", action="append", help="JSON-lines predictions (repeatable)")
    parser_evaluate.add_argument("--binned", action="store_true", help="MAE per source separation bin")
    parser_evaluate.add_argument("--sisdr", action="append", help="sisdr.jsonl written by beamform (repeatable)")
    parser_evaluate.add_argument("--out", help="CSV copy of the results table")
    parser_evaluate.set_defaults(func=evaluate)

    parser_spectrum = subparsers.add_parser("spectrum", help="dump subspace spectra as CSV")
    _add_common(parser_spectrum)
    _add_recordings(parser_spectrum)
    parser_spectrum.add_argument("--method", choices=sorted(SUBSPACE_METHODS), default="music")
    parser_spectrum.add_argument("--out", required=True, help="output directory")
    parser_spectrum.set_defaults(func=spectrum)
    return parser


_EXIT_CODES = (
    (ConfigException, EXIT_CONFIG),
    (FileNotFoundError, EXIT_MISSING_FILE),
    (AudioFormatException, EXIT_AUDIO),
    (TrainingDivergedException, EXIT_DIVERGED),
    (CheckpointException, EXIT_CHECKPOINT),
    (DoaLabException, EXIT_ERROR),
)


def run(argv=None) -> int:
    """Execute one command line; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_OK if exit_.code in (0, None) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_OK
    try:
        args.func(args)
    except (DoaLabException, FileNotFoundError) as err:
        for kind, code in _EXIT_CODES:
            if isinstance(err, kind):
                print("doalab: error: {}".format(err), file=sys.stderr)
                return code
    return EXIT_OK


def main():
    """Console entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
