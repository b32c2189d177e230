"""Binary container for fitted forests.

Layout (little-endian): magic ``b"RSF1"``, ``uint32`` header length, a
UTF-8 JSON header, then the raw arrays in header order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .forest import ForestParams, SurvivalForest, SurvivalTree

MAGIC = b"RSF1"
_TREE_FIELDS = ("feature", "threshold", "left", "right", "leaf_row", "chf", "in_bag")


def _le(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))


def save_forest(forest: SurvivalForest, path) -> None:
    arrays = [("grid", forest.grid), ("oob_sum", forest.oob_sum), ("oob_count", forest.oob_count)]
    for b, tree in enumerate(forest.trees):
        arrays += [(f"{b}.{f}", getattr(tree, f)) for f in _TREE_FIELDS]
    params = asdict(forest.params)
    params["rule"] = forest.params.rule.value
    header = {
        "params": params,
        "names": list(forest.names),
        "n_trees": forest.n_trees,
        "arrays": [[k, _le(a).dtype.str, list(a.shape)] for k, a in arrays],
    }
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for _, a in arrays:
            fh.write(_le(a).tobytes())


def load_forest(path) -> SurvivalForest:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not an RSF1 container")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode())
        arrays = {}
        for key, dtype, shape in header["arrays"]:
            dt = np.dtype(dtype)
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(dt.itemsize * count)
            if len(buf) != dt.itemsize * count:
                raise ValueError(f"{path}: truncated at array {key}")
            arrays[key] = np.frombuffer(buf, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    trees = tuple(SurvivalTree(*(arrays[f"{b}.{f}"] for f in _TREE_FIELDS))
                  for b in range(header["n_trees"]))
    return SurvivalForest(trees, arrays["grid"], ForestParams(**header["params"]),
                          tuple(header["names"]), arrays["oob_sum"], arrays["oob_count"])
