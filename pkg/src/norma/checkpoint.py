"""Self-describing checkpoint container: JSON header + named f64 tensors."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .model import ModelConfig, NormaModel

MAGIC = b"NORMACK1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: NormaModel, path: str | Path) -> None:
    names = sorted(model.params)
    header = {
        "version": 1,
        "config": dataclasses.asdict(model.config),
        "meta": model.meta,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> NormaModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header.get("version") != 1:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        cfg = header["config"]
        cfg["quantile_levels"] = tuple(cfg["quantile_levels"])
        config = ModelConfig(**cfg)
        params: dict[str, Tensor] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise CheckpointError(f"truncated tensor payload for {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            params[entry["name"]] = Tensor(arr, requires_grad=True)
    return NormaModel(config, params, header.get("meta", {}))


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
