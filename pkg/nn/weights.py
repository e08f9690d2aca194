"""
Flat binary weight files.

Layout (little-endian):
    8 bytes   magic b'HSMLP001'
    uint32    number of layer dims n
    n uint32  layer dims d0..d(n-1)
    per layer k: float64[d(k) * d(k+1)] weight matrix, row-major,
                 followed by float64[d(k+1)] bias
"""

import logging
from pathlib import Path

import numpy as np

from Hybridsim.exceptions import WeightFileError
from .services import MlpParams

logger = logging.getLogger(__name__)

MAGIC = b'HSMLP001'


def save_weights(net: MlpParams, path) -> Path:
    path = Path(path)
    dims = np.asarray(net.layer_dims, dtype='<u4')
    try:
        with open(path, 'wb') as fh:
            fh.write(MAGIC)
            fh.write(np.asarray([dims.size], dtype='<u4').tobytes())
            fh.write(dims.tobytes())
            for w, b in zip(net.weights, net.biases):
                fh.write(np.ascontiguousarray(w, dtype='<f8').tobytes())
                fh.write(np.ascontiguousarray(b, dtype='<f8').tobytes())
    except OSError as e:
        raise WeightFileError(f"Cannot write weight file {path}: {e}") from e
    logger.info(f"Saved network {net.layer_dims} to {path}")
    return path


def load_weights(path) -> MlpParams:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise WeightFileError(f"Cannot read weight file {path}: {e}") from e

    if raw[:len(MAGIC)] != MAGIC:
        raise WeightFileError(f"{path} is not a network weight file")
    offset = len(MAGIC)
    try:
        (n_dims,) = np.frombuffer(raw, dtype='<u4', count=1, offset=offset)
        offset += 4
        dims = np.frombuffer(raw, dtype='<u4', count=int(n_dims), offset=offset).astype(int)
        offset += 4 * int(n_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(raw, dtype='<f8', count=fan_in * fan_out, offset=offset)
            offset += 8 * fan_in * fan_out
            b = np.frombuffer(raw, dtype='<f8', count=fan_out, offset=offset)
            offset += 8 * fan_out
            weights.append(w.reshape(fan_in, fan_out).astype(float))
            biases.append(b.astype(float))
    except ValueError as e:
        raise WeightFileError(f"{path} is truncated: {e}") from e
    if offset != len(raw):
        raise WeightFileError(f"{path} has {len(raw) - offset} trailing bytes")

    net = MlpParams(weights, biases)
    if not net.is_finite():
        raise WeightFileError(f"{path} contains non-finite parameters")
    return net
