"""Versioned binary checkpoints for oracle and modulator weights.

Format v1 (documented in docs/formats.md):

    bytes 0..3    magic b"TKCK"
    bytes 4..7    format version, little-endian uint32
    bytes 8..15   header length H, little-endian uint64
    bytes 16..16+H JSON header (utf-8)
    remainder     weight arrays, little-endian float64, concatenated in
                  the order listed under header["arrays"]

The header carries a config snapshot, the training step counter, and
for each array its name and length. load(save(c)) reproduces every
array bitwise; future format versions and truncated files are refused.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, MissingArtifactError

MAGIC = b"TKCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Weights plus the metadata needed to rebuild their owners."""

    meta: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    step: int = 0
    config_text: str = ""
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path):
    """Write a checkpoint file in format v1."""
    names = list(ckpt.arrays)
    header = {
        "step": int(ckpt.step),
        "config_toml": ckpt.config_text,
        "meta": ckpt.meta,
        "arrays": [{"name": n, "size": int(ckpt.arrays[n].size)}
                   for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            arr = np.ascontiguousarray(ckpt.arrays[n], dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    """Read and validate a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"checkpoint not found: {path}") from exc
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version > FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format v{version} is newer than supported "
            f"v{FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", data, 8)
    end = 16 + header_len
    if len(data) < end:
        raise CheckpointError(f"truncated checkpoint header: {path}")
    try:
        header = json.loads(data[16:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {path}") from exc
    arrays = {}
    pos = end
    for spec in header.get("arrays", []):
        nbytes = spec["size"] * 8
        if len(data) < pos + nbytes:
            raise CheckpointError(
                f"truncated checkpoint: array {spec['name']!r} incomplete"
            )
        arrays[spec["name"]] = np.frombuffer(
            data[pos:pos + nbytes], dtype="<f8"
        ).copy()
        pos += nbytes
    return Checkpoint(meta=header.get("meta", {}), arrays=arrays,
                      step=header.get("step", 0),
                      config_text=header.get("config_toml", ""),
                      version=version)
