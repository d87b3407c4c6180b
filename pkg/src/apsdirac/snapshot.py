"""Binary spinor snapshots.

Layout (all little-endian)::

    offset  size  content
    0       8     magic b"APSDSNAP"
    8       4     uint32 format version (1)
    12      32    sha256 digest of the mesh descriptor
    44      8     float64 time t
    52      8     uint64 number of complex values n
    60      16 n  float64 pairs (re, im), node-major, spinor index fastest
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dirac import Mesh

MAGIC = b"APSDSNAP"
VERSION = 1
_HEADER = struct.Struct("<8sI32sdQ")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    t: float
    mesh_hash: str
    values: np.ndarray  # flat complex128

    def reshape(self, mesh: Mesh) -> np.ndarray:
        if mesh.mesh_hash() != self.mesh_hash:
            raise SnapshotError("snapshot mesh hash does not match the current mesh")
        return self.values.reshape(mesh.field_shape)


def encode_snapshot(field: np.ndarray, mesh: Mesh, t: float) -> bytes:
    field = np.asarray(field, dtype=np.complex128)
    if field.shape != mesh.field_shape:
        raise SnapshotError(f"field shape {field.shape} does not match mesh {mesh.field_shape}")
    flat = np.ascontiguousarray(field.reshape(-1))
    head = _HEADER.pack(MAGIC, VERSION, bytes.fromhex(mesh.mesh_hash()), float(t), flat.size)
    return head + flat.view("<f8").astype("<f8", copy=False).tobytes()


def decode_snapshot(buf: bytes, mesh: Mesh | None = None) -> Snapshot:
    if len(buf) < _HEADER.size:
        raise SnapshotError(f"truncated snapshot: {len(buf)} bytes, header needs {_HEADER.size}")
    magic, version, digest, t, n = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise SnapshotError("not a snapshot file (bad magic)")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    need = _HEADER.size + 16 * n
    if len(buf) != need:
        raise SnapshotError(f"truncated snapshot: expected {need} bytes, found {len(buf)}")
    vals = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=2 * n).astype(np.float64)
    snap = Snapshot(float(t), digest.hex(), vals.view(np.complex128).copy())
    if mesh is not None:
        if mesh.mesh_hash() != snap.mesh_hash:
            raise SnapshotError("snapshot mesh hash does not match the current mesh")
        if n != 2 * mesh.n_nodes:
            raise SnapshotError(f"value count {n} != rank * nodes = {2 * mesh.n_nodes}")
    return snap


def export_snapshot(field: np.ndarray, path, mesh: Mesh, t: float) -> None:
    Path(path).write_bytes(encode_snapshot(field, mesh, t))


def import_snapshot(path, mesh: Mesh | None = None) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes(), mesh)
