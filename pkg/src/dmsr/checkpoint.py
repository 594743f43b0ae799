"""Binary serialization for tensors and training checkpoints.

Tensor records are little-endian: rank and extents as unsigned 64-bit
integers, then the raw float64 payload in C order.  A checkpoint file is
the magic ``DMSR``, one version byte, a length-prefixed JSON metadata
blob (step, config, parameter names, optimizer state layout), and the
tensor records in the order the metadata lists them.  Round-trips are
bitwise exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .tensor import ContractError

MAGIC = b"DMSR"
VERSION = 1


def write_tensor(f, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    f.write(struct.pack("<Q", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(np.ascontiguousarray(arr).astype("<f8", copy=False).tobytes())


def read_tensor(f) -> np.ndarray:
    rank = struct.unpack("<Q", _read_exact(f, 8))[0]
    shape = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank)) if rank \
        else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = np.frombuffer(_read_exact(f, 8 * count), dtype="<f8")
    return data.reshape(shape).astype(np.float64)


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ContractError("truncated tensor record")
    return buf


def save_checkpoint(path, params: dict, step: int, config: dict,
                    adam_state: dict | None = None) -> None:
    """``params`` maps name -> ndarray; ``adam_state`` holds m/v/t."""
    meta = {
        "step": int(step),
        "config": config,
        "params": list(params),
        "adam": None if adam_state is None else {"t": int(adam_state["t"])},
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in meta["params"]:
            write_tensor(f, params[name])
        if adam_state is not None:
            for key in ("m", "v"):
                for name in meta["params"]:
                    write_tensor(f, adam_state[key][name])


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ContractError(f"{path}: not a checkpoint file")
        version = f.read(1)[0]
        if version != VERSION:
            raise ContractError(
                f"{path}: unsupported checkpoint version {version}")
        meta_len = struct.unpack("<Q", _read_exact(f, 8))[0]
        meta = json.loads(_read_exact(f, meta_len).decode("utf-8"))
        params = {name: read_tensor(f) for name in meta["params"]}
        adam = None
        if meta["adam"] is not None:
            adam = {"t": meta["adam"]["t"]}
            for key in ("m", "v"):
                adam[key] = {name: read_tensor(f) for name in meta["params"]}
    return {"step": meta["step"], "config": meta["config"],
            "params": params, "adam": adam}
