"""Checkpoint files: ``b"HACK"`` header followed by named tensor records.

Header: magic, version u32, variant tag (u32 length + UTF-8), num_classes
u32, record count u32. Each record: name length u32, UTF-8 name, then a
tensor in the format of :mod:`hierattn.serialize`.
"""
from __future__ import annotations

import io
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import HierAttn, build_model, model_config
from .serialize import FormatError, atomic_write, read_tensor, write_tensor

MAGIC = b"HACK"
VERSION = 1

PathLike = Union[str, os.PathLike]


@dataclass
class Checkpoint:
    variant: str
    num_classes: int
    state: "OrderedDict[str, np.ndarray]"


def checkpoint_bytes(variant: str, num_classes: int, state: dict) -> bytes:
    buf = io.BytesIO()
    tag = variant.encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tag)))
    buf.write(tag)
    buf.write(struct.pack("<II", num_classes, len(state)))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        write_tensor(buf, arr)
    return buf.getvalue()


def save_checkpoint(model: HierAttn, path: PathLike) -> None:
    atomic_write(path, checkpoint_bytes(model.cfg.variant, model.cfg.num_classes, model.state_dict()))


def _read(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated checkpoint")
    return buf


def read_checkpoint(data: bytes) -> Checkpoint:
    f = io.BytesIO(data)
    if _read(f, 4) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, tag_len = struct.unpack("<II", _read(f, 8))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    variant = _read(f, tag_len).decode("utf-8")
    num_classes, count = struct.unpack("<II", _read(f, 8))
    state: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (n,) = struct.unpack("<I", _read(f, 4))
        name = _read(f, n).decode("utf-8")
        state[name] = read_tensor(f)
    if f.read(1):
        raise FormatError("trailing bytes after last record")
    return Checkpoint(variant, num_classes, state)


def load_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        return read_checkpoint(f.read())


def model_from_checkpoint(ckpt: Checkpoint, **overrides) -> HierAttn:
    cfg = model_config(ckpt.variant, num_classes=ckpt.num_classes, **overrides)
    model = build_model(cfg)
    model.load_state_dict(ckpt.state)
    return model
