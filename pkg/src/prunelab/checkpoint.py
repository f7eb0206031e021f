"""Binary checkpoints of masked models and optimizer state.

Layout (integers little-endian)::

    b"PRLB"  u8 version
    u32 len, utf-8 JSON header (model spec, init seed, prunable ids, seeds)
    u32 n_params, then per parameter:
        u32 len, id | u8 rank | rank x u32 dims | f32 theta payload | u8 mask payload
    u8 has_optimizer, and if set:
        u32 len, utf-8 JSON (method, hyper-parameters, step count)
        u32 n_buffers, then per buffer:
            u32 len, "<buffer>/<param id>" | u8 rank | rank x u32 dims | f32 payload

Float payloads are raw IEEE-754 bytes, so a round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptPayload, VersionMismatch
from .nn import Model, ModelSpec, build_model
from .optim import OptimizerState

MAGIC = b"PRLB"
VERSION = 1


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _pack_array(arr: np.ndarray) -> bytes:
    return struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(model: Model, optimizer: Optional[OptimizerState], path, seeds: Optional[dict] = None) -> None:
    header = {
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "prunable": [p.id for p in model.params if p.prunable],
        "seeds": seeds or {},
    }
    out = [MAGIC, struct.pack("<B", VERSION), _pack_str(json.dumps(header, sort_keys=True)),
           struct.pack("<I", len(model.params))]
    for p in model.params:
        out += [_pack_str(p.id), _pack_array(p.value), p.mask.astype(np.uint8).tobytes()]
    if optimizer is None:
        out.append(struct.pack("<B", 0))
    else:
        meta = {k: getattr(optimizer, k) for k in ("method", "lr", "momentum", "beta1", "beta2", "epsilon", "t")}
        records = [(f"{name}/{pid}", arr) for name, store in sorted(optimizer.buffers.items())
                   for pid, arr in sorted(store.items())]
        out += [struct.pack("<B", 1), _pack_str(json.dumps(meta, sort_keys=True)),
                struct.pack("<I", len(records))]
        for key, arr in records:
            out += [_pack_str(key), _pack_array(arr)]
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptPayload(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptPayload(f"bad string in checkpoint: {exc}") from None

    def array(self) -> np.ndarray:
        (rank,) = self.unpack("<B")
        dims = self.unpack(f"<{rank}I")
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32)
        return data.reshape(dims)


@dataclass
class Checkpoint:
    version: int
    model: Model
    optimizer: Optional[OptimizerState]
    seeds: dict


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: ``(model, optimizer_or_None)``."""
    ckpt = read_checkpoint(path)
    return ckpt.model, ckpt.optimizer


def read_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CorruptPayload(f"{path}: not a prunelab checkpoint")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {VERSION}")
    try:
        header = json.loads(r.string())
        spec = ModelSpec.from_dict(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptPayload(f"{path}: bad header ({exc})") from None
    model = build_model(spec, header["seed"])
    prunable = set(header["prunable"])
    (n,) = r.unpack("<I")
    if n != len(model.params):
        raise CorruptPayload(f"{path}: {n} parameter records, model has {len(model.params)}")
    for _ in range(n):
        pid = r.string()
        value = r.array()
        p = model[pid]
        if value.shape != p.value.shape:
            raise CorruptPayload(f"{path}: {pid} has shape {value.shape}, expected {p.value.shape}")
        mask = np.frombuffer(r.take(value.size), dtype=np.uint8).reshape(value.shape)
        if mask.max(initial=0) > 1:
            raise CorruptPayload(f"{path}: {pid} mask is not binary")
        p.value = value
        p.mask = mask.astype(np.float32)
        p.prunable = pid in prunable

    (has_opt,) = r.unpack("<B")
    optimizer = None
    if has_opt:
        meta = json.loads(r.string())
        optimizer = OptimizerState(**meta)
        (count,) = r.unpack("<I")
        for _ in range(count):
            name, pid = r.string().split("/", 1)
            optimizer.buffers.setdefault(name, {})[pid] = r.array()
    if r.pos != len(r.buf):
        raise CorruptPayload(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return Checkpoint(version, model, optimizer, header.get("seeds", {}))
