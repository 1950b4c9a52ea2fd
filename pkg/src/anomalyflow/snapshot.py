"""Binary metric snapshots.

Layout (little-endian, no padding)::

    magic        6 bytes   b"AFLOW1"
    version      uint16    1
    N            uint32    points per active axis
    axes_mask    uint8     bit a set <=> real axis a is active
    periods      6 x f64
    t            f64
    alpha_prime  f64
    payload      N**k x 3 x 3 complex128 (real, imag interleaved), point-major, then p̄, then q

The payload is the raw C-order dump of ``g.g`` so a roundtrip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import FlowState
from .lattice import GridSpec
from .tensors import MetricField, SingularMetricError

MAGIC = b"AFLOW1"
VERSION = 1
_HEADER = struct.Struct("<6sHIB6ddd")
_DTYPE = np.dtype("<c16")


class SnapshotError(ValueError):
    """Unreadable snapshot; the message names the offending field."""


@dataclass(frozen=True)
class SnapshotFile:
    version: int
    grid: GridSpec
    t: float
    alpha_prime: float
    state: FlowState


def encode_snapshot(s: FlowState, alpha_prime: float = 0.0) -> bytes:
    grid = s.grid
    head = _HEADER.pack(
        MAGIC, VERSION, grid.points_per_axis, grid.active_mask, *grid.periods, float(s.t), float(alpha_prime)
    )
    return head + np.ascontiguousarray(s.g.g, dtype=_DTYPE).tobytes()


def save_snapshot(s: FlowState, path, alpha_prime: float = 0.0) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(s, alpha_prime))
    return path


def decode_snapshot(data: bytes) -> SnapshotFile:
    if len(data) < _HEADER.size:
        raise SnapshotError(f"header: truncated ({len(data)} of {_HEADER.size} bytes)")
    magic, version, n, mask, *rest = _HEADER.unpack_from(data)
    periods, t, alpha_prime = tuple(rest[:6]), rest[6], rest[7]
    if magic != MAGIC:
        raise SnapshotError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"version: unsupported format version {version}")
    if mask >= 1 << 6:
        raise SnapshotError(f"axes_mask: invalid active-axes bitmask {mask:#x}")
    axes = tuple(a for a in range(6) if mask >> a & 1)
    try:
        grid = GridSpec(n, axes, periods)
    except ValueError as exc:
        raise SnapshotError(f"N/periods: {exc}") from None
    expected = grid.npoints * 9 * _DTYPE.itemsize
    payload = data[_HEADER.size :]
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise SnapshotError(f"payload: {kind} ({len(payload)} bytes, expected {expected})")
    g = np.frombuffer(payload, dtype=_DTYPE).astype(complex).reshape(grid.shape + (3, 3))
    try:
        metric = MetricField(grid, g)
    except SingularMetricError as exc:
        raise SnapshotError(f"payload: {exc}") from None
    return SnapshotFile(version, grid, t, alpha_prime, FlowState.from_metric(metric, t))


def read_snapshot(path) -> SnapshotFile:
    return decode_snapshot(Path(path).read_bytes())


def load_snapshot(path) -> FlowState:
    return read_snapshot(path).state
