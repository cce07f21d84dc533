"""CSV and binary export of path ensembles.

Binary layout (all little-endian)::

    offset  size  field
    0       8     magic  b"BIFBMENS"
    8       4     uint32 format version (1)
    12      4     uint32 kernel id (index in KernelName; 0xFFFFFFFF otherwise)
    16      8     uint64 M  (paths)
    24      8     uint64 N  (time points)
    32      8     uint64 seed
    40      8*N   float64 time points
    ...     8*M*N float64 values, row-major (one path per row)
"""

import struct

import numpy as np

from .cov_kernels import KernelName
from .reports import fmt17, to_csv, write_atomic, write_atomic_bytes
from .sampler import PathEnsemble, TimeGrid

MAGIC = b"BIFBMENS"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQQ")
NO_KERNEL = 0xFFFFFFFF


def kernel_code(name: str) -> int:
    try:
        return KernelName(name).code
    except ValueError:
        return NO_KERNEL


def ensemble_csv(ens: PathEnsemble) -> str:
    header = [f"t={fmt17(t)}" for t in ens.times]
    rows = [[fmt17(x) for x in row] for row in ens.values]
    return to_csv(header, rows)


def write_csv(ens: PathEnsemble, path):
    return write_atomic(path, ensemble_csv(ens))


def read_csv(path):
    """Return (times, values) from a CSV written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        times = np.array([float(h.split("=", 1)[1]) for h in header])
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return times, values.reshape(-1, len(times))


def ensemble_bytes(ens: PathEnsemble) -> bytes:
    m, n = ens.values.shape
    head = _HEADER.pack(MAGIC, VERSION, kernel_code(ens.kernel_name), m, n, ens.seed)
    return head + np.asarray(ens.times, dtype="<f8").tobytes() + np.ascontiguousarray(ens.values, dtype="<f8").tobytes()


def write_binary(ens: PathEnsemble, path):
    return write_atomic_bytes(path, ensemble_bytes(ens))


def read_binary(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, code, m, n, seed = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"not an ensemble file (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"unsupported ensemble format version {version}")
    off = _HEADER.size
    times = np.frombuffer(data, dtype="<f8", count=n, offset=off)
    values = np.frombuffer(data, dtype="<f8", count=m * n, offset=off + 8 * n).reshape(m, n).copy()
    origin = n > 0 and times[0] == 0.0
    grid = TimeGrid(times[1:] if origin else times, include_origin=origin)
    name = list(KernelName)[code].value if code < len(KernelName) else "unknown"
    return PathEnsemble(grid, values, int(seed), name)
