"""Versioned binary checkpoints of named tensors.

Layout (little-endian)::

    b"SPNN"  u32 version  u16 len + arch tag  u32 len + config JSON  u64 step
    u32 n_tensors, then per tensor:
        u16 len + name  u8 dtype code  u8 ndim  u32 dims...  raw data
"""
from __future__ import annotations

import io
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .models import ClassifierConfig, PhaseClassifier

MAGIC = b"SPNN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


def param_store(model: PhaseClassifier, optimizer: torch.optim.Optimizer | None = None) -> OrderedDict:
    """Model parameters and buffers, plus Adam moments if an optimizer is given."""
    store = OrderedDict((k, v.detach().cpu().numpy().copy()) for k, v in model.state_dict().items())
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                st = optimizer.state.get(p, {})
                for slot in ("exp_avg", "exp_avg_sq"):
                    if slot in st:
                        store[f"adam.{slot}.{names[id(p)]}"] = st[slot].detach().numpy().copy()
    return store


def _write(fh, store: OrderedDict, cfg: ClassifierConfig, step: int) -> None:
    tag = cfg.arch.encode()
    cfg_json = json.dumps(cfg.to_json(), sort_keys=True).encode()
    fh.write(MAGIC + struct.pack("<I", VERSION))
    fh.write(struct.pack("<H", len(tag)) + tag)
    fh.write(struct.pack("<I", len(cfg_json)) + cfg_json)
    fh.write(struct.pack("<QI", step, len(store)))
    for name, arr in store.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
        key = name.encode()
        fh.write(struct.pack("<H", len(key)) + key)
        fh.write(struct.pack("<BB", _CODES[dt], arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def checkpoint_save(model: PhaseClassifier, path: str | Path,
                    optimizer: torch.optim.Optimizer | None = None, step: int = 0) -> None:
    with open(path, "wb") as fh:
        _write(fh, param_store(model, optimizer), model.cfg, step)


def checkpoint_bytes(model: PhaseClassifier) -> bytes:
    buf = io.BytesIO()
    _write(buf, param_store(model), model.cfg, 0)
    return buf.getvalue()


def _read(raw: bytes):
    view = memoryview(raw)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack("<H", take(2))
    arch = bytes(take(n)).decode()
    (n,) = struct.unpack("<I", take(4))
    cfg = ClassifierConfig.from_json(json.loads(bytes(take(n))))
    step, count = struct.unpack("<QI", take(12))
    store = OrderedDict()
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = bytes(take(n)).decode()
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dt = _DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        store[name] = np.frombuffer(take(size), dtype=dt).reshape(shape).copy()
    if pos != len(raw):
        raise CheckpointError("trailing bytes after checkpoint")
    if arch != cfg.arch:
        raise CheckpointError(f"arch tag {arch!r} disagrees with config {cfg.arch!r}")
    return cfg, store, step


def checkpoint_load(path: str | Path, cfg: ClassifierConfig | None = None) -> PhaseClassifier:
    """Load a model; if ``cfg`` is given every tensor shape must match it."""
    stored_cfg, store, _ = _read(Path(path).read_bytes())
    model = PhaseClassifier(cfg or stored_cfg)
    expected = model.state_dict()
    params = OrderedDict((k, v) for k, v in store.items() if not k.startswith("adam."))
    if list(params) != list(expected):
        missing = set(expected) ^ set(params)
        raise CheckpointError(f"tensor names do not match the architecture: {sorted(missing)[:5]}")
    for k, v in params.items():
        if tuple(v.shape) != tuple(expected[k].shape):
            raise CheckpointError(f"shape mismatch for {k}: {v.shape} vs {tuple(expected[k].shape)}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
    model.eval()
    return model


def read_store(path: str | Path):
    """``(config, named tensors, step)`` without building a model."""
    return _read(Path(path).read_bytes())
