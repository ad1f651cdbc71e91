"""Uniform Cartesian grids on boxes, scalar fields and finite differences.

Every grid has the same spacing ``h`` along each axis. Node arrays use
``indexing='ij'``: axis ``k`` of a values array is coordinate ``x_k``.

Field serialization
-------------------
CSV: a header line ``i0,...,i{n-1},x0,...,x{n-1},value`` followed by one row
per node in C order (last index fastest). Floats are written with Python's
``repr`` (shortest round-trip decimal). Lines end with ``\\n``.

Binary (all little-endian)::

    8 bytes   magic  b"AMLGRID\\0"
    uint32    format version (1)
    uint32    dimension n
    n times:  float64 lower, float64 upper, uint64 node count
    uint32    label length L, then L bytes of UTF-8 label
    float64   node values, C order, prod(counts) entries
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError

_MAGIC = b"AMLGRID\x00"
_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``prod_k [lower_k, upper_k]`` with ``shape[k]`` nodes per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.shape)):
            raise ConfigError("lower, upper and shape must have equal length")
        if not 1 <= len(self.shape) <= 3:
            raise ConfigError(f"dimension must be 1, 2 or 3, got {len(self.shape)}")
        if any(c < 3 for c in self.shape):
            raise ConfigError(f"need at least 3 nodes per axis, got {self.shape}")
        if any(b <= a for a, b in zip(self.lower, self.upper)):
            raise ConfigError("degenerate box")
        hs = [(b - a) / (c - 1) for a, b, c in zip(self.lower, self.upper, self.shape)]
        if max(hs) - min(hs) > 1e-12 * max(1.0, max(hs)):
            raise ConfigError(f"unequal spacing across axes: {hs}")

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / (self.shape[0] - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c) for a, b, c in zip(self.lower, self.upper, self.shape)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.n):
            idx = [slice(None)] * self.n
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.n

    def node_index(self, x: Sequence[float]) -> tuple[int, ...]:
        """Multi-index of the node nearest to ``x``."""
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - np.asarray(self.lower)) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise InputError(f"point {x.tolist()} lies outside the grid")
        return tuple(int(i) for i in idx)

    def subgrid(self, lower: Sequence[float], upper: Sequence[float]) -> tuple["Grid", tuple[slice, ...]]:
        """Nodes of this grid inside ``[lower, upper]``; returns the grid and the index slices.

        The requested box corners must coincide with nodes.
        """
        lo = self.node_index(lower)
        hi = self.node_index(upper)
        a = np.asarray(self.lower) + np.asarray(lo) * self.h
        b = np.asarray(self.lower) + np.asarray(hi) * self.h
        if np.max(np.abs(a - np.asarray(lower))) > 1e-9 * max(1.0, self.h) or np.max(
            np.abs(b - np.asarray(upper))
        ) > 1e-9 * max(1.0, self.h):
            raise ConfigError("sub-box corners must lie on grid nodes")
        slices = tuple(slice(i, j + 1) for i, j in zip(lo, hi))
        sub = Grid(tuple(float(v) for v in a), tuple(float(v) for v in b), tuple(j - i + 1 for i, j in zip(lo, hi)))
        return sub, slices


def build_grid(box: Sequence[Sequence[float]], nodes: int | Sequence[int]) -> Grid:
    """Grid on ``box = [(a_1, b_1), ..., (a_n, b_n)]`` with ``nodes`` per axis."""
    box = [tuple(float(v) for v in ab) for ab in box]
    if isinstance(nodes, (int, np.integer)):
        nodes = [int(nodes)] * len(box)
    if len(nodes) != len(box):
        raise ConfigError("nodes must give one count per axis")
    return Grid(tuple(a for a, _ in box), tuple(b for _, b in box), tuple(int(c) for c in nodes))


@dataclass(frozen=True)
class GridField:
    grid: Grid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise InputError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise InputError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn, label: str = "") -> "GridField":
        """Sample ``fn(x)`` where ``x`` has shape ``(*grid.shape, n)``."""
        return cls(grid, fn(grid.coords()), label)

    def boundary_values(self) -> np.ndarray:
        return self.values[self.grid.boundary_mask()]

    def with_values(self, values: np.ndarray, label: str | None = None) -> "GridField":
        return GridField(self.grid, values, self.label if label is None else label)

    def restrict(self, slices: tuple[slice, ...], grid: Grid) -> "GridField":
        return GridField(grid, self.values[slices], self.label)


def gradient(f: GridField) -> np.ndarray:
    """Centered differences inside, second-order one-sided at the boundary.

    Returns shape ``(*shape, n)``.
    """
    g = f.grid
    parts = np.gradient(f.values, g.h, edge_order=2)
    if g.n == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def hessian(f: GridField) -> np.ndarray:
    """Centered second and cross differences at interior nodes, shape ``(*interior_shape, n, n)``."""
    u = f.values
    g = f.grid
    n, h = g.n, g.h
    inner = tuple(c - 2 for c in g.shape)
    out = np.empty(inner + (n, n))

    def shifted(offset):
        return u[tuple(slice(1 + o, c - 1 + o) for o, c in zip(offset, g.shape))]

    center = shifted((0,) * n)
    for i in range(n):
        e = [0] * n
        e[i] = 1
        plus = shifted(tuple(e))
        e[i] = -1
        minus = shifted(tuple(e))
        out[..., i, i] = (plus - 2.0 * center + minus) / h**2
        for j in range(i + 1, n):
            terms = 0.0
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                off = [0] * n
                off[i], off[j] = si, sj
                terms = terms + si * sj * shifted(tuple(off))
            out[..., i, j] = out[..., j, i] = terms / (4.0 * h**2)
    return out


# --------------------------------------------------------------------------- I/O


def to_csv(f: GridField) -> str:
    g = f.grid
    header = [f"i{k}" for k in range(g.n)] + [f"x{k}" for k in range(g.n)] + ["value"]
    axes = g.axes()
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for idx in np.ndindex(*g.shape):
        xs = [repr(float(axes[k][i])) for k, i in enumerate(idx)]
        buf.write(",".join([str(i) for i in idx] + xs + [repr(float(f.values[idx]))]) + "\n")
    return buf.getvalue()


def from_csv(text: str, grid: Grid, label: str = "") -> GridField:
    lines = text.strip("\n").split("\n")
    vals = np.empty(grid.shape)
    seen = 0
    for line in lines[1:]:
        parts = line.split(",")
        idx = tuple(int(p) for p in parts[: grid.n])
        vals[idx] = float(parts[-1])
        seen += 1
    if seen != grid.size:
        raise InputError(f"CSV has {seen} rows, grid has {grid.size} nodes")
    return GridField(grid, vals, label)


def to_bytes(f: GridField) -> bytes:
    g = f.grid
    label = f.label.encode("utf-8")
    parts = [_MAGIC, struct.pack("<II", _VERSION, g.n)]
    for a, b, c in zip(g.lower, g.upper, g.shape):
        parts.append(struct.pack("<ddQ", a, b, c))
    parts.append(struct.pack("<I", len(label)))
    parts.append(label)
    parts.append(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))
    return b"".join(parts)


def from_bytes(data: bytes) -> GridField:
    if data[:8] != _MAGIC:
        raise InputError("not a grid field file (bad magic)")
    version, n = struct.unpack_from("<II", data, 8)
    if version != _VERSION:
        raise InputError(f"unsupported format version {version}")
    off = 16
    lower, upper, shape = [], [], []
    for _ in range(n):
        a, b, c = struct.unpack_from("<ddQ", data, off)
        off += 24
        lower.append(a)
        upper.append(b)
        shape.append(int(c))
    (nlabel,) = struct.unpack_from("<I", data, off)
    off += 4
    label = data[off : off + nlabel].decode("utf-8")
    off += nlabel
    grid = Grid(tuple(lower), tuple(upper), tuple(shape))
    vals = np.frombuffer(data, dtype="<f8", count=grid.size, offset=off).reshape(grid.shape)
    return GridField(grid, vals, label)
