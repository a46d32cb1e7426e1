"""Q-network checkpoint files.

Layout of the ``.npz`` archive (format version 1):

    format_version   int64 scalar, 1
    layer_sizes      int64 vector [n_in, h1, ..., n_out]
    learning_rate    float64 scalar
    grad_clip        float64 scalar, NaN when clipping is disabled
    W0 .. W{L-1}     float64 matrices, shape (fan_in, fan_out), row-major
    b0 .. b{L-1}     float64 vectors, length fan_out
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.core.exceptions import ShapeError
from app.core.neural import QNetwork

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_network(net: QNetwork, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format_version": np.int64(FORMAT_VERSION),
        "layer_sizes": np.asarray(net.layer_sizes, dtype=np.int64),
        "learning_rate": np.float64(net.learning_rate),
        "grad_clip": np.float64(np.nan if net.grad_clip is None else net.grad_clip),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = np.ascontiguousarray(w)
        arrays[f"b{i}"] = np.ascontiguousarray(b)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Saved Q-network checkpoint to {path}")
    return path


def load_network(path: Union[str, Path]) -> QNetwork:
    with np.load(Path(path)) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ShapeError(f"unsupported checkpoint format version {version}")
        sizes = [int(s) for s in data["layer_sizes"]]
        clip = float(data["grad_clip"])
        net = QNetwork(
            sizes,
            learning_rate=float(data["learning_rate"]),
            grad_clip=None if np.isnan(clip) else clip,
        )
        for i in range(len(sizes) - 1):
            w, b = data[f"W{i}"], data[f"b{i}"]
            if w.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise ShapeError(f"layer {i} shape mismatch in {path}")
            net.weights[i] = w.astype(float)
            net.biases[i] = b.astype(float)
    return net
