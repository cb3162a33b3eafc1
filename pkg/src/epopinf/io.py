"""Binary matrix files, snapshot files and CSV tables.

Matrix record layout (little-endian)::

    b"OIMX" | u16 version | u64 rows | u64 cols | rows*cols float64, column-major

A snapshot file holds two matrix records (states, then time derivatives)
followed by a trailer: u64 byte length and UTF-8 JSON metadata.
"""

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .pde import SnapshotSet

MAGIC = b"OIMX"
VERSION = 1
_HEADER = struct.Struct("<4sHQQ")


class MatrixFormatError(ValueError):
    pass


def _pack_matrix(M):
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("only 1D or 2D arrays can be stored")
    rows, cols = M.shape
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + M.tobytes(order="F")


def _unpack_matrix(buf, offset=0):
    if len(buf) - offset < _HEADER.size:
        raise MatrixFormatError("truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MatrixFormatError(f"unsupported format version {version}")
    start = offset + _HEADER.size
    end = start + 8 * rows * cols
    if end > len(buf):
        raise MatrixFormatError("truncated matrix data")
    data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start)
    return data.reshape((rows, cols), order="F").astype(float), end


def write_matrix(path, M):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pack_matrix(M))


def read_matrix(path):
    M, _ = _unpack_matrix(Path(path).read_bytes())
    return M


def write_snapshot(path, snap):
    meta = {
        "dt": snap.dt_sim,
        "stride": snap.stride,
        "ic_params": snap.ic_params,
        "t0": float(snap.times[0]),
    }
    text = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pack_matrix(snap.X) + _pack_matrix(snap.Xdot)
                     + struct.pack("<Q", len(text)) + text)


def read_snapshot(path):
    buf = Path(path).read_bytes()
    X, off = _unpack_matrix(buf)
    Xdot, off = _unpack_matrix(buf, off)
    if len(buf) - off < 8:
        raise MatrixFormatError("missing metadata trailer")
    (length,) = struct.unpack_from("<Q", buf, off)
    meta = json.loads(buf[off + 8: off + 8 + length].decode("utf-8"))
    times = meta["t0"] + np.arange(X.shape[1]) * meta["stride"] * meta["dt"]
    return SnapshotSet(X=X, Xdot=Xdot, times=times, dt_sim=meta["dt"],
                       stride=meta["stride"], ic_params=meta["ic_params"])


def format_float(x):
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    """CSV with a header row; floats printed with 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
