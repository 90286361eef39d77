"""Minimal NIfTI-1 reader/writer.

Supports the little-endian single-file (.nii / .nii.gz) subset used by the
pipeline: 3D scalar volumes with datatype u8, i16 or f32, plus 4D files via
per-frame iteration (PET frame averaging).  The .hdr/.img pair form ("ni1")
is read but never written.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

from .errors import CorruptFileError, UnsupportedDtypeError, VolumeFormatError
from .volume import Volume

__all__ = ["read_volume", "read_frames", "write_volume"]

HEADER_SIZE = 348

_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32}
_GZIP_MAGIC = b"\x1f\x8b"


def _read_bytes(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == _GZIP_MAGIC:
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def _parse_header(raw, path):
    if len(raw) < HEADER_SIZE:
        raise CorruptFileError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            raise VolumeFormatError(f"{path}: big-endian NIfTI-1 is not supported")
        raise VolumeFormatError(f"{path}: sizeof_hdr is {sizeof_hdr}, not 348")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeFormatError(f"{path}: bad magic {magic!r}")

    dim = struct.unpack_from("<8h", raw, 40)
    (datatype, bitpix) = struct.unpack_from("<2h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset, scl_slope, scl_inter) = struct.unpack_from("<3f", raw, 108)
    (sform_code,) = struct.unpack_from("<h", raw, 254)
    srow = np.array(
        [
            struct.unpack_from("<4f", raw, 280),
            struct.unpack_from("<4f", raw, 296),
            struct.unpack_from("<4f", raw, 312),
            (0.0, 0.0, 0.0, 1.0),
        ],
        dtype=np.float64,
    )
    return {
        "magic": magic,
        "dim": dim,
        "datatype": datatype,
        "bitpix": bitpix,
        "pixdim": pixdim,
        "vox_offset": vox_offset,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "sform_code": sform_code,
        "srow": srow,
    }


def _load(path):
    raw = _read_bytes(path)
    hdr = _parse_header(raw, path)

    ndim = hdr["dim"][0]
    if ndim not in (3, 4):
        raise VolumeFormatError(f"{path}: dim[0] must be 3 or 4, got {ndim}")
    nx, ny, nz = (int(d) for d in hdr["dim"][1:4])
    nt = int(hdr["dim"][4]) if ndim == 4 else 1
    if min(nx, ny, nz) < 1 or nt < 1:
        raise VolumeFormatError(f"{path}: non-positive dims {hdr['dim'][1:5]}")

    if hdr["datatype"] not in _DTYPES:
        raise UnsupportedDtypeError(
            f"{path}: datatype code {hdr['datatype']} not in supported set {sorted(_DTYPES)}"
        )
    dtype = _DTYPES[hdr["datatype"]]

    if hdr["magic"] == b"ni1\x00":
        img_path = os.path.splitext(path)[0] + ".img"
        payload = _read_bytes(img_path)
        offset = int(hdr["vox_offset"])
    else:
        payload = raw
        offset = int(hdr["vox_offset"]) or HEADER_SIZE + 4

    count = nx * ny * nz * nt
    need = count * np.dtype(dtype).itemsize
    if len(payload) - offset < need:
        raise CorruptFileError(
            f"{path}: payload holds {len(payload) - offset} bytes, header promises {need}"
        )
    data = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"), count=count, offset=offset)
    data = data.astype(np.float32)
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if np.isfinite(slope) and slope not in (0.0, 1.0):
        data = data * np.float32(slope) + np.float32(inter)
    elif slope == 1.0 and inter != 0.0:
        data = data + np.float32(inter)

    spacing = tuple(abs(float(p)) for p in hdr["pixdim"][1:4])
    if any(s == 0.0 for s in spacing):
        raise VolumeFormatError(f"{path}: zero pixdim {hdr['pixdim'][1:4]}")
    if hdr["sform_code"] > 0:
        affine = hdr["srow"]
    else:
        affine = np.diag((*spacing, 1.0))

    frames = data.reshape((nx, ny, nz, nt), order="F")
    return [Volume(frames[..., t], spacing, affine.copy()) for t in range(nt)]


def read_volume(path) -> Volume:
    """Read a 3D little-endian NIfTI-1 file into a Volume."""
    path = os.fspath(path)
    frames = _load(path)
    if len(frames) != 1:
        raise VolumeFormatError(f"{path}: expected a 3D volume, found {len(frames)} frames")
    return frames[0]


def read_frames(path) -> list[Volume]:
    """Read a 3D or 4D NIfTI-1 file as a list of 3D frames."""
    return _load(os.fspath(path))


def write_volume(v: Volume, path) -> None:
    """Write a Volume as a single-file f32 NIfTI-1 (.nii, gzipped iff *.gz).

    read_volume(write_volume(v)) reproduces dims and voxels bit-exactly and
    the affine to float32 precision.
    """
    path = os.fspath(path)
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    nx, ny, nz = v.dims
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, 16, 32)  # f32
    struct.pack_into("<8f", hdr, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<3f", hdr, 108, float(HEADER_SIZE + 4), 0.0, 0.0)  # vox_offset, no scaling
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform off, sform on
    struct.pack_into("<4f", hdr, 280, *v.affine[0])
    struct.pack_into("<4f", hdr, 296, *v.affine[1])
    struct.pack_into("<4f", hdr, 312, *v.affine[2])
    hdr[344:348] = b"n+1\x00"

    blob = bytes(hdr) + b"\x00" * 4 + v.voxels.astype("<f4").ravel(order="F").tobytes()
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write volume to {path}: {exc}") from exc
