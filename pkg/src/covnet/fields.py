"""Voxel grids on the unit cube, field samples, inner products, and file I/O.

The domain is always [0,1]^d partitioned into a regular K_1 x ... x K_d voxel
grid; evaluation points are the voxel midpoints, so averaging over the D grid
values is an exact midpoint quadrature with weight 1/D.  An N x D matrix of
grid values, one row per observed field, is the data currency of the whole
package.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldFormatError

FIELD_MAGIC = b"CVNF"
FIELD_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Regular voxel grid on [0,1]^d with midpoint evaluation locations.

    Flat indices are row-major over the per-axis sizes: index i maps to the
    multi-index (j_1, ..., j_d) and to the midpoint ((j_k + 0.5) / K_k)_k.
    """

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 1:
            raise ValueError("grid needs at least one axis")
        if any(int(k) <= 0 for k in self.sizes):
            raise ValueError(f"grid sizes must be positive, got {self.sizes}")
        object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))

    @property
    def d(self) -> int:
        return len(self.sizes)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    def coordinate(self, i: int) -> np.ndarray:
        """Midpoint of the voxel with flat index i."""
        if not 0 <= i < self.n_points:
            raise ValueError(f"flat index {i} outside [0, {self.n_points})")
        multi = np.unravel_index(i, self.sizes)
        return np.array([(j + 0.5) / k for j, k in zip(multi, self.sizes)])

    def coordinates(self) -> np.ndarray:
        """All midpoints as an (D, d) array in flat-index order."""
        axes = [(np.arange(k) + 0.5) / k for k in self.sizes]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, points: np.ndarray) -> np.ndarray:
        """Nearest-voxel flat indices for points in [0,1]^d (rows)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = [
            np.clip((pts[:, k] * self.sizes[k]).astype(np.int64), 0, self.sizes[k] - 1)
            for k in range(self.d)
        ]
        return np.ravel_multi_index(idx, self.sizes)


def make_grid(d: int, sizes) -> Grid:
    """Build a Grid, checking that `sizes` lists one positive size per axis."""
    sizes = tuple(int(k) for k in sizes)
    if int(d) != len(sizes):
        raise ValueError(f"expected {d} sizes, got {len(sizes)}")
    return Grid(sizes)


@dataclass(frozen=True)
class FieldMatrix:
    """N fields discretized on a common grid; row n holds field n's values."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if vals.ndim != 2:
            raise ValueError(f"field values must be 2-D, got shape {vals.shape}")
        if vals.shape[1] != self.grid.n_points:
            raise ValueError(
                f"row length {vals.shape[1]} does not match grid size {self.grid.n_points}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must all be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def centered(self) -> "FieldMatrix":
        """Fields with the empirical mean field subtracted."""
        return FieldMatrix(self.grid, self.values - self.values.mean(axis=0))


@dataclass(frozen=True)
class GramMatrix:
    """Matrix of pairwise field inner products.

    `symmetric` marks a self-gram (both sides the same sample), in which
    case symmetry up to accumulation error and a nonnegative diagonal are
    enforced.
    """

    values: np.ndarray = field(repr=False)
    symmetric: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("gram values must be 2-D")
        if self.symmetric:
            if vals.shape[0] != vals.shape[1]:
                raise ValueError("self-gram must be square")
            scale = max(np.abs(vals).max(), 1e-300) if vals.size else 1.0
            if vals.size and np.abs(vals - vals.T).max() > 1e-12 * scale:
                raise ValueError("self-gram matrix is not symmetric")
            if vals.size and np.diag(vals).min() < -1e-12 * scale:
                raise ValueError("self-gram has a negative diagonal entry")
        object.__setattr__(self, "values", vals)


def inner_product(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Midpoint-quadrature L2 inner product: mean of the entrywise product."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (grid.n_points,) or b.shape != (grid.n_points,):
        raise ValueError(
            f"rows must have length {grid.n_points}, got {a.shape} and {b.shape}"
        )
    return float(a @ b) / grid.n_points


def cross_gram(a: FieldMatrix, b: FieldMatrix | None = None) -> GramMatrix:
    """All pairwise inner products between rows of `a` and rows of `b`.

    With b omitted (or b is a) the result is symmetrized so that the square
    Gram is exactly symmetric.
    """
    same = b is None or b is a
    b = a if same else b
    if b.grid != a.grid:
        raise ValueError("field matrices live on different grids")
    g = (a.values @ b.values.T) / a.grid.n_points
    if same:
        g = (g + g.T) / 2.0
    return GramMatrix(g, symmetric=same)


def _read_exact(buf: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(buf):
        raise FieldFormatError(f"truncated file while reading {what}", len(buf))
    return buf[offset : offset + size]


def write_fields(path, f: FieldMatrix) -> None:
    """Write a field matrix in the CVNF binary format (little endian).

    Layout: magic "CVNF", u32 version, u32 d, d x u32 sizes, u64 N, then
    N*D float64 values row-major.  No padding anywhere.
    """
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<II", FIELD_VERSION, f.grid.d))
        fh.write(struct.pack(f"<{f.grid.d}I", *f.grid.sizes))
        fh.write(struct.pack("<Q", f.n))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_fields(path) -> FieldMatrix:
    """Read a CVNF field file, validating structure and payload."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if _read_exact(buf, 0, 4, "magic") != FIELD_MAGIC:
        raise FieldFormatError(f"bad magic {buf[:4]!r}, expected {FIELD_MAGIC!r}", 0)
    (version,) = struct.unpack("<I", _read_exact(buf, 4, 4, "version"))
    if version != FIELD_VERSION:
        raise FieldFormatError(f"unsupported version {version}", 4)
    (d,) = struct.unpack("<I", _read_exact(buf, 8, 4, "dimension"))
    if d < 1:
        raise FieldFormatError("dimension must be positive", 8)
    sizes = struct.unpack(f"<{d}I", _read_exact(buf, 12, 4 * d, "grid sizes"))
    offset = 12 + 4 * d
    for k, size in enumerate(sizes):
        if size == 0:
            raise FieldFormatError(f"zero grid size on axis {k}", 12 + 4 * k)
    (n,) = struct.unpack("<Q", _read_exact(buf, offset, 8, "sample count"))
    offset += 8
    n_points = int(np.prod(sizes, dtype=np.int64))
    payload = _read_exact(buf, offset, 8 * n * n_points, "field values")
    if len(buf) != offset + 8 * n * n_points:
        raise FieldFormatError("trailing bytes after field values", offset + 8 * n * n_points)
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n_points)
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise FieldFormatError("non-finite field value", offset + 8 * first)
    return FieldMatrix(make_grid(d, sizes), values.astype(np.float64))
