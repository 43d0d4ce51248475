"""
Weight bundles: a directory holding ``manifest.txt`` plus one header/raw pair
per named tensor. Manifest lines read ``name = d0 d1 ...``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import fileio

MANIFEST = "manifest.txt"


def save_weights(weights: dict[str, np.ndarray], directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in weights.items():
        fileio.write_array(directory / f"{name}.hdr", arr)
    manifest = {name: list(np.shape(arr)) for name, arr in weights.items()}
    (directory / MANIFEST).write_text(fileio.format_key_values(manifest))
    return directory


def load_weights(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = fileio.parse_key_values((directory / MANIFEST).read_text(), str(directory / MANIFEST))
    weights = {}
    for name, dims in manifest.items():
        arr, _ = fileio.read_array(directory / f"{name}.hdr")
        expected = fileio.parse_ints(dims, name)
        if arr.shape != expected:
            raise fileio.HeaderError(f"{name}: manifest says {expected}, file holds {arr.shape}")
        weights[name] = arr
    return weights
