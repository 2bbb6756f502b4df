"""
Model checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic b"DOALABCK"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header: model config, metadata and the array table
    ...       concatenated '<f4' arrays at the offsets listed in the header

The header is written with sorted keys so equal models give equal files.
"""

import json
import logging
import struct
from typing import Optional, Tuple

import numpy as np
import torch

from doalab.audio import atomic_write
from doalab.exceptions import CheckpointException, ConfigException
from doalab.neural.models import DoaModel, ModelConfig, build_model

_LOGGER = logging.getLogger(__name__)

MAGIC = b"DOALABCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


def save_checkpoint(path, model: DoaModel, metadata: Optional[dict] = None):
    """Write the weights and config of `model` atomically."""
    arrays, table, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4")
        table.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": data.nbytes})
        arrays.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "model": model.config.to_dict(),
            "metadata": metadata or {},
            "dtype": "<f4",
            "arrays": table,
        },
        sort_keys=True,
    ).encode("utf-8")
    with atomic_write(path, "wb") as stream:
        stream.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        stream.write(header)
        for blob in arrays:
            stream.write(blob)
    _LOGGER.info("Saved %s checkpoint to %s", model.config.kind, path)


def load_checkpoint(path) -> Tuple[DoaModel, dict]:
    """Rebuild the model stored at `path`; returns (model, metadata)."""
    try:
        with open(path, "rb") as stream:
            blob = stream.read()
    except OSError as err:
        raise CheckpointException("cannot read checkpoint {}: {}".format(path, err)) from err
    if len(blob) < _PREFIX.size:
        raise CheckpointException("{} is too short to be a checkpoint".format(path))
    magic, version, header_length = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointException("{} is not a doalab checkpoint".format(path))
    if version != FORMAT_VERSION:
        raise CheckpointException("checkpoint format version {} is not supported".format(version))
    body_start = _PREFIX.size + header_length
    try:
        header = json.loads(blob[_PREFIX.size : body_start].decode("utf-8"))
        config = ModelConfig.from_dict(header["model"])
    except (ValueError, KeyError, TypeError, ConfigException) as err:
        raise CheckpointException("corrupt checkpoint header in {}: {}".format(path, err)) from err

    model = build_model(config)
    state = {}
    for entry in header.get("arrays", []):
        start = body_start + entry["offset"]
        if start + entry["nbytes"] > len(blob):
            raise CheckpointException("array {} is truncated in {}".format(entry["name"], path))
        data = np.frombuffer(blob, dtype="<f4", count=entry["nbytes"] // 4, offset=start)
        state[entry["name"]] = torch.from_numpy(data.reshape(entry["shape"]).astype(np.float32))
    expected = set(model.state_dict())
    if set(state) != expected:
        missing = sorted(expected - set(state))
        raise CheckpointException("checkpoint {} does not match the model; missing {}".format(path, missing))
    model.load_state_dict(state)
    model.eval()
    return model, header.get("metadata", {})
