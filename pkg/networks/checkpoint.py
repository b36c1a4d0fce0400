"""
Binary checkpoints.

Layout (little-endian): magic b'TRM1', u32 version, u32 number of layer sizes,
u32 per size, u32 activation code (0 relu, 1 tanh), then theta as float64.
"""
import struct

import numpy as np

from core.exceptions import CheckpointError
from core.storage import write_bytes_atomic

from .mlp import ACTIVATIONS, MlpSpec, ModelParams

MAGIC = b'TRM1'
VERSION = 1


def encode(model):
    """TRM1 bytes: magic, version, layer sizes, activation code, little-endian theta."""
    sizes = model.spec.layer_sizes
    header = MAGIC + struct.pack(f"<II{len(sizes)}I", VERSION, len(sizes), *sizes)
    header += struct.pack('<I', ACTIVATIONS.index(model.spec.activation))
    return header + model.theta.astype('<f8').tobytes()


def decode(payload):
    """Parse TRM1 bytes back into ModelParams; raises CheckpointError."""
    if payload[:4] != MAGIC:
        raise CheckpointError('not a TRM1 checkpoint')
    try:
        version, count = struct.unpack_from('<II', payload, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        offset = 12
        sizes = struct.unpack_from(f"<{count}I", payload, offset)
        offset += 4 * count
        (code,) = struct.unpack_from('<I', payload, offset)
        offset += 4
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint header: {exc}") from exc
    if code >= len(ACTIVATIONS):
        raise CheckpointError(f"unknown activation code {code}")
    spec = MlpSpec(sizes, ACTIVATIONS[code])
    body = payload[offset:]
    if len(body) != 8 * spec.param_count:
        raise CheckpointError(
            f"checkpoint body holds {len(body)} bytes, spec needs {8 * spec.param_count}"
        )
    return ModelParams(spec, np.frombuffer(body, dtype='<f8').astype(np.float64))


def save_checkpoint(path, model):
    return write_bytes_atomic(path, encode(model))


def load_checkpoint(path):
    try:
        with open(path, 'rb') as handle:
            payload = handle.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(payload)
