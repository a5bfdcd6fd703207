"""Versioned binary checkpoint container.

Layout::

    8 bytes   magic  b"SNELSDCK"
    4 bytes   format version, uint32 little-endian
    8 bytes   header length N, uint64 little-endian
    N bytes   UTF-8 JSON header: config, config digest, vocabulary, epoch,
              metrics history and the ordered tensor index (name + shape)
    ...       each indexed tensor as raw float64 little-endian, in order

Values are written and read as raw IEEE doubles, so a reload is bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CheckpointError

MAGIC = b"SNELSDCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    vocab: list[str]
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    def params(self) -> dict[str, np.ndarray]:
        return {k[len("param."):]: v for k, v in self.tensors.items() if k.startswith("param.")}

    def optimizer_state(self) -> dict[str, np.ndarray]:
        return {k[len("optim."):]: v for k, v in self.tensors.items() if k.startswith("optim.")}


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    index = [{"name": k, "shape": list(v.shape)} for k, v in ckpt.tensors.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "config_digest": ckpt.config.digest(),
        "vocab": ckpt.vocab,
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in ckpt.tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    if raw[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, n = struct.unpack_from("<IQ", raw, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[start : start + n].decode("utf-8"))
    config = RunConfig(**header["config"])
    if config.digest() != header["config_digest"]:
        raise CheckpointError("config digest mismatch")
    offset = start + n
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError("truncated checkpoint")
        tensors[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError("trailing bytes after tensor data")
    return Checkpoint(config, header["vocab"], tensors, header["epoch"], header["history"])
