"""Binary checkpoint format for model parameters and buffers.

Layout: magic "HFN1", u32 format version, u64 header length, a JSON header
(architecture, width, tensor table with byte offsets, training metadata),
then the concatenated little-endian tensor payloads.  Aliased tensors
(fusionB1 weight sharing) are stored once and recorded in an alias map, so
a loaded model shares storage exactly like a freshly built one.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import CorruptFileError, HfnetError
from .models import ModelGraph, build_model

__all__ = ["MAGIC", "VERSION", "save_checkpoint", "load_checkpoint"]

MAGIC = b"HFN1"
VERSION = 1

_DTYPE_TAGS = {"float32": "<f4", "float64": "<f8"}


class CheckpointFormatError(HfnetError):
    """Not a readable checkpoint (bad magic, version or header)."""


def _tensor_entries(model: ModelGraph):
    """Distinct tensors in serialization order: parameters then buffers."""
    entries = []
    for name, p in model.distinct_parameters().items():
        entries.append((name, p.data, "param"))
    for name, b in model.named_buffers().items():
        entries.append((name, b, "buffer"))
    return entries


def save_checkpoint(model: ModelGraph, path, meta=None) -> None:
    meta = dict(model.meta if meta is None else meta)
    dtype_name = np.dtype(model.dtype).name
    entries = _tensor_entries(model)

    table, payloads = [], []
    offset = 0
    tag = _DTYPE_TAGS[dtype_name]
    for name, data, kind in entries:
        raw = np.ascontiguousarray(data, dtype=tag).tobytes()
        table.append({
            "name": name,
            "shape": list(data.shape),
            "offset": offset,
            "nbytes": len(raw),
            "kind": kind,
        })
        payloads.append(raw)
        offset += len(raw)

    header = {
        "arch_id": model.arch_id,
        "width": model.width,
        "input_dims": list(model.input_dims),
        "dropout_p": model.dropout_p,
        "dtype": dtype_name,
        "seed": model.seed,
        "meta": meta,
        "tensors": table,
        "aliases": model.alias_map(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(os.fspath(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> ModelGraph:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, header_len = struct.unpack_from("<IQ", blob, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    if len(blob) < 16 + header_len:
        raise CorruptFileError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16:16 + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}: unreadable header: {exc}") from exc

    try:
        dtype = np.dtype(header["dtype"])
        tag = _DTYPE_TAGS[header["dtype"]]
        model = build_model(
            header["arch_id"],
            width=header["width"],
            input_dims=tuple(header["input_dims"]),
            dropout_p=header["dropout_p"],
            seed=header["seed"],
            dtype=dtype.type,
        )
        model.meta = dict(header["meta"])
        table = header["tensors"]
        aliases = header["aliases"]
    except KeyError as exc:
        raise CheckpointFormatError(f"{path}: header missing {exc}") from exc

    if aliases != model.alias_map():
        raise CheckpointFormatError(f"{path}: alias map does not match arch {header['arch_id']}")

    payload = blob[16 + header_len:]
    params = model.named_parameters()
    buffers = model.named_buffers()
    expected = {name for name, _, _ in _tensor_entries(model)}
    listed = {t["name"] for t in table}
    if listed != expected:
        raise CheckpointFormatError(f"{path}: tensor table does not match arch {header['arch_id']}")

    for t in table:
        end = t["offset"] + t["nbytes"]
        if end > len(payload):
            raise CorruptFileError(f"{path}: payload truncated at tensor {t['name']}")
        count = int(np.prod(t["shape"], dtype=np.int64)) if t["shape"] else 1
        if count * np.dtype(tag).itemsize != t["nbytes"]:
            raise CorruptFileError(f"{path}: size mismatch for tensor {t['name']}")
        arr = np.frombuffer(payload, dtype=tag, count=count, offset=t["offset"]).reshape(t["shape"])
        dest = params[t["name"]].data if t["name"] in params else buffers[t["name"]]
        if dest.shape != arr.shape:
            raise CheckpointFormatError(f"{path}: shape mismatch for {t['name']}")
        dest[...] = arr
    return model
