"""WAV input/output and atomic file writing."""

from contextlib import contextmanager
import hashlib
import logging
import os
from pathlib import Path
import tempfile

import numpy as np
import soundfile as sf

from doalab.dsp import DEFAULT_SAMPLE_RATE, Waveform
from doalab.exceptions import AudioFormatException

_LOGGER = logging.getLogger(__name__)

SUPPORTED_SUBTYPES = ("PCM_16", "FLOAT")


@contextmanager
def atomic_write(path, mode="w", **kwargs):
    """Write to a temporary file next to `path` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, tmp_name = tempfile.mkstemp(prefix=".{}.".format(path.name), dir=str(path.parent))
    os.close(handle)
    try:
        with open(tmp_name, mode, **kwargs) as stream:
            yield stream
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_wav(path, expected_rate=DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a mono or interleaved multichannel WAV file.

    Resampling is not supported; files at another rate are rejected.
    """
    try:
        info = sf.info(str(path))
    except RuntimeError as err:
        raise AudioFormatException("cannot read {}: {}".format(path, err)) from err
    if info.format != "WAV":
        raise AudioFormatException("{} is not a WAV file ({})".format(path, info.format))
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise AudioFormatException("{} uses unsupported sample format {}".format(path, info.subtype))
    if expected_rate is not None and info.samplerate != expected_rate:
        raise AudioFormatException(
            "{} is sampled at {} Hz, expected {} Hz".format(path, info.samplerate, expected_rate)
        )
    data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    _LOGGER.debug("Read %s: %d channels, %d samples", path, data.shape[1], data.shape[0])
    return Waveform(data.T, rate)


def write_wav(path, waveform: Waveform, subtype="FLOAT"):
    """Write a waveform atomically as 16-bit PCM or 32-bit float WAV."""
    if subtype not in SUPPORTED_SUBTYPES:
        raise AudioFormatException("unsupported sample format {}".format(subtype))
    with atomic_write(path, "wb") as stream:
        sf.write(stream, waveform.samples.T, waveform.sample_rate, subtype=subtype, format="WAV")
    _LOGGER.debug("Wrote %s", path)


def content_key(waveform: Waveform) -> str:
    """Digest of the sample data as stored in a 32-bit float file."""
    digest = hashlib.sha256()
    digest.update("{}:{}:{}".format(waveform.sample_rate, *waveform.samples.shape).encode("ascii"))
    digest.update(np.ascontiguousarray(waveform.samples.T, dtype="<f4").tobytes())
    return digest.hexdigest()


def write_content_addressed(root, waveform: Waveform, subtype="FLOAT") -> str:
    """Store a waveform under audio/<key[:2]>/<key>.wav and return the path relative to `root`."""
    key = content_key(waveform)
    relative = Path("audio") / key[:2] / "{}.wav".format(key)
    target = Path(root) / relative
    if not target.exists():
        write_wav(target, waveform, subtype=subtype)
    return relative.as_posix()
