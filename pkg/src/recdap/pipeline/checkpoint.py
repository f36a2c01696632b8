"""Versioned checkpoint files: JSON header followed by little-endian float64 values.

Layout::

    b"RECDAPCK"            8-byte magic
    uint32 LE              format version
    uint64 LE              header length in bytes
    header                 UTF-8 JSON (sorted keys) with a parameter table
    payload                concatenated '<f8' parameter values, table order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import LoadError

MAGIC = b"RECDAPCK"
VERSION = 1


def save(path, state: dict, header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table, offset = [], 0
    for name, value in state.items():
        value = np.asarray(value, dtype=np.float64)
        table.append({"name": name, "shape": list(value.shape), "offset": offset, "count": int(value.size)})
        offset += value.size
    head = dict(header, format="recdap-checkpoint", version=VERSION, params=table)
    blob = json.dumps(head, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for value in state.values():
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return path


def load(path) -> tuple[dict, dict]:
    """Returns (header, {name: array})."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise LoadError(f"{path} is not a recdap checkpoint")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise LoadError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + 12
    header = json.loads(raw[start : start + hlen].decode())
    payload = np.frombuffer(raw, dtype="<f8", offset=start + hlen)
    state = {}
    for entry in header["params"]:
        lo = entry["offset"]
        vals = payload[lo : lo + entry["count"]]
        if vals.size != entry["count"]:
            raise LoadError(f"{path}: truncated payload for {entry['name']}")
        state[entry["name"]] = vals.reshape(entry["shape"]).astype(np.float64)
    return header, state


def save_diffusion(path, model) -> Path:
    """Noise-predictor parameters plus the schedule configuration."""
    state = {k: v for k, v in model.registry.state_dict().items() if k.startswith("diffusion.")}
    header = {
        "kind": "diffusion",
        "schedule": model.schedule.config(),
        "dims": {"data_width": 2 * model.config.dim, "cond_width": 3 * model.config.dim + 2,
                 "channels": list(model.config.unet_channels),
                 "time_width": model.config.time_width, "embed_width": model.config.embed_width},
    }
    return save(path, state, header)
