"""Portable checkpoints: JSON manifest + raw little-endian float32 blob.

A checkpoint ``NAME`` is two files, ``NAME.json`` and ``NAME.bin``.
The manifest lists each parameter as {name, shape, dtype, offset} plus
a config snapshot and the training-epoch counter. Writes are atomic
(temp file then rename) and round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: dict
    epoch: int


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def save_checkpoint(ckpt: Checkpoint, base_path) -> None:
    base = Path(base_path)
    entries = []
    blob = bytearray()
    for name, arr in ckpt.params.items():
        arr = np.asarray(arr, dtype="<f4", order="C")  # keeps 0-d shapes intact
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": len(blob),
        })
        blob.extend(arr.tobytes())
    manifest = {"params": entries, "config": ckpt.config, "epoch": ckpt.epoch}
    _atomic_write(base.with_suffix(".bin"), bytes(blob))
    _atomic_write(base.with_suffix(".json"),
                  (json.dumps(manifest, indent=2) + "\n").encode())


def load_checkpoint(base_path) -> Checkpoint:
    base = Path(base_path)
    manifest = json.loads(base.with_suffix(".json").read_text())
    blob = base.with_suffix(".bin").read_bytes()
    params = {}
    for e in manifest["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"])
        params[e["name"]] = arr.reshape(tuple(e["shape"])).copy()
    return Checkpoint(params, manifest["config"], manifest["epoch"])


def state_to_params(model: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def params_to_model(model: nn.Module, params: dict[str, np.ndarray]) -> None:
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in params.items()}
    model.load_state_dict(state)
