"""
Binary field snapshots.

Layout: magic b"ZKF1", three little-endian u32 sizes (nx + 1, ny, nz or 1),
then the values as little-endian float64 in row-major order.
"""

import logging
from pathlib import Path

import numpy as np

from models.core import BCTag, Field, Grid
from models.errors import SnapshotFormatError

logger = logging.getLogger(__name__)

MAGIC: bytes = b"ZKF1"
SIZES_DTYPE: np.dtype = np.dtype("<u4")
VALUES_DTYPE: np.dtype = np.dtype("<f8")
HEADER_BYTES: int = len(MAGIC) + 3 * SIZES_DTYPE.itemsize


def snapshot_name(step: int) -> str:
    return f"snapshot_{step:08d}.zkf"


def _sizes(shape: tuple[int, ...]) -> tuple[int, int, int]:
    return (shape[0], shape[1], shape[2] if len(shape) == 3 else 1)


def write_snapshot(path: str | Path, field: Field) -> Path:
    """Write a field; its values are finite by construction."""
    path = Path(path)
    header: bytes = MAGIC + np.asarray(_sizes(field.values.shape), dtype=SIZES_DTYPE).tobytes()
    payload: bytes = np.ascontiguousarray(field.values, dtype=VALUES_DTYPE).tobytes()
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc.strerror}") from exc
    return path


def read_snapshot_values(path: str | Path) -> np.ndarray:
    """
    Read the raw values of a snapshot.

    Returns:
        np.ndarray: Array of shape (nx + 1, ny, nz or 1).

    Raises:
        SnapshotFormatError: Wrong magic, a size that disagrees with the header, or NaN.
    """
    path = Path(path)
    data: bytes = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise SnapshotFormatError(f"{path}: not a field snapshot (bad magic)")
    if len(data) < HEADER_BYTES:
        raise SnapshotFormatError(f"{path}: truncated header")
    sizes: np.ndarray = np.frombuffer(data, dtype=SIZES_DTYPE, count=3, offset=len(MAGIC))
    count: int = int(np.prod(sizes.astype(np.int64)))
    expected: int = HEADER_BYTES + count * VALUES_DTYPE.itemsize
    if len(data) != expected:
        raise SnapshotFormatError(
            f"{path}: size mismatch, header promises {expected} bytes, file has {len(data)}"
        )
    values: np.ndarray = np.frombuffer(data, dtype=VALUES_DTYPE, offset=HEADER_BYTES)
    if np.isnan(values).any():
        raise SnapshotFormatError(f"{path}: snapshot contains NaN")
    return values.astype(float).reshape(tuple(int(s) for s in sizes))


def read_snapshot(path: str | Path, grid: Grid, bc_tag: BCTag = BCTag.UNCONSTRAINED) -> Field:
    """Read a snapshot onto grid; the stored sizes must match the grid."""
    values: np.ndarray = read_snapshot_values(path)
    if values.shape != _sizes(grid.shape):
        raise SnapshotFormatError(
            f"{path}: stored sizes {values.shape} do not match grid {_sizes(grid.shape)}"
        )
    return Field(grid, values.reshape(grid.shape), bc_tag)
