"""The 4-D look-up table: lattice, interpolation-based lookup, serialization.

Tables map a quad of intensities to C output channels. The lattice has 17
knots per dimension spaced 16 levels apart; knot 16 is the virtual input 256
so the top cell interpolates without extrapolating. Lookup uses 4-D simplex
interpolation: the coordinate fractions, sorted descending, pick one of the
24 simplices of a cell and the output is a convex combination of 5 vertex
entries. Tables are immutable after construction; lookup is pure.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidInputError

KNOTS = 17
DIMS = 4
CELL_WIDTH = 16
TABLE_POINTS = KNOTS ** DIMS  # 83,521

_MAGIC = b"ALUT"
_VERSION = 1
_HEADER = struct.Struct("<4sHBBBH5x")  # magic, version, interp, dims, knots, channels
INTERP_SIMPLEX = 0
INTERP_MULTILINEAR = 1
_STRIDES = np.array([KNOTS ** 3, KNOTS ** 2, KNOTS, 1], dtype=np.int64)


def knot_value(i: int) -> int:
    """Intensity of lattice knot ``i``: 16*i, with knot 16 the virtual 256."""
    if not 0 <= i <= KNOTS - 1:
        raise InvalidInputError(f"knot index {i} outside 0..{KNOTS - 1}")
    return CELL_WIDTH * i


def lattice_quads() -> np.ndarray:
    """All 17^4 lattice coordinate quads (raw knot values, 0..256), f64.

    Row order matches the entry layout: index (i0,i1,i2,i3) at offset
    ((i0*17 + i1)*17 + i2)*17 + i3.
    """
    grid = np.stack(
        np.meshgrid(*[np.arange(KNOTS)] * DIMS, indexing="ij"), axis=-1
    ).reshape(-1, DIMS)
    return grid.astype(np.float64) * CELL_WIDTH


@dataclass(frozen=True)
class LutTable:
    """Immutable 4-D table with C 8-bit output channels per lattice point."""

    entries: np.ndarray  # (17, 17, 17, 17, C) uint8
    interpolation: int = INTERP_SIMPLEX

    def __post_init__(self):
        e = self.entries
        if e.dtype != np.uint8 or e.shape[:4] != (KNOTS,) * DIMS or e.ndim != 5:
            raise InvalidInputError("entries must be uint8 with shape (17,17,17,17,C)")
        object.__setattr__(self, "entries", np.array(e, order="C"))  # owned copy
        self.entries.setflags(write=False)

    @property
    def out_channels(self) -> int:
        return self.entries.shape[4]

    @property
    def flat(self) -> np.ndarray:
        """Entries as (83521, C), offset ((i0*17+i1)*17+i2)*17+i3."""
        return self.entries.reshape(TABLE_POINTS, self.out_channels)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LutTable)
            and self.interpolation == other.interpolation
            and np.array_equal(self.entries, other.entries)
        )

    @classmethod
    def from_flat(cls, flat: np.ndarray, out_channels: int,
                  interpolation: int = INTERP_SIMPLEX) -> "LutTable":
        shaped = np.asarray(flat, dtype=np.uint8).reshape((KNOTS,) * DIMS + (out_channels,))
        return cls(shaped, interpolation)


def simplex_parts(coords: np.ndarray):
    """Decompose coords (..., 4) into the 5 simplex vertices and weights.

    Returns (flat_vertex_indices (..., 5), weights (..., 5), order (..., 4))
    where ``order`` lists dimensions by descending fraction, ties broken by
    ascending dimension index.
    """
    cells = (coords * (1.0 / CELL_WIDTH)).astype(np.int64)
    np.minimum(cells, KNOTS - 2, out=cells)
    fracs = (coords - float(CELL_WIDTH) * cells) * (1.0 / CELL_WIDTH)
    order = np.argsort(-fracs, axis=-1, kind="stable")
    fs = np.take_along_axis(fracs, order, axis=-1)

    weights = np.empty(coords.shape[:-1] + (5,))
    weights[..., 0] = 1.0 - fs[..., 0]
    weights[..., 1] = fs[..., 0] - fs[..., 1]
    weights[..., 2] = fs[..., 1] - fs[..., 2]
    weights[..., 3] = fs[..., 2] - fs[..., 3]
    weights[..., 4] = fs[..., 3]

    # Walk from the cell base, adding one lattice step per sorted dimension.
    flat = np.empty(coords.shape[:-1] + (5,), dtype=np.int64)
    flat[..., 0] = cells @ _STRIDES
    steps = _STRIDES[order]
    np.cumsum(steps, axis=-1, out=steps)
    flat[..., 1:] = flat[..., :1] + steps
    return flat, weights, order


def interpolate_flat(flat_entries: np.ndarray, vertex_idx: np.ndarray,
                     weights: np.ndarray) -> np.ndarray:
    """Convex combination of 5 gathered entries; accumulation order fixed."""
    gathered = flat_entries[vertex_idx].astype(np.float64)  # (..., 5, C)
    out = weights[..., 0, None] * gathered[..., 0, :]
    for j in range(1, 5):
        out = out + weights[..., j, None] * gathered[..., j, :]
    return out


def lookup(table: LutTable, coords) -> np.ndarray:
    """Interpolated table output at real coordinates.

    Args:
        table: the LUT.
        coords: (..., 4) array-like, each value in [0, 255].

    Returns:
        (..., C) float64 values, each inside [min, max] of the 5 simplex
        vertex entries used.
    """
    if table.interpolation != INTERP_SIMPLEX:
        raise InvalidInputError(
            f"interpolation kind {table.interpolation} not supported (simplex only)")
    c = np.asarray(coords, dtype=np.float64)
    if c.shape[-1] != DIMS:
        raise InvalidInputError("coords must have 4 components")
    if np.any(c < 0.0) or np.any(c > 255.0):
        raise InvalidInputError("coords outside [0, 255]")
    flat_idx, weights, _ = simplex_parts(c)
    return interpolate_flat(table.flat, flat_idx, weights)


def serialize(table: LutTable) -> bytes:
    """Encode a table into the LUT container (little-endian, 16-byte header)."""
    header = _HEADER.pack(_MAGIC, _VERSION, table.interpolation, DIMS, KNOTS,
                          table.out_channels)
    return header + table.entries.tobytes()


def deserialize(data: bytes) -> LutTable:
    """Decode a LUT container; raises FormatError with the failing offset."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, version, interp, dims, knots, channels = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if interp not in (INTERP_SIMPLEX, INTERP_MULTILINEAR):
        raise FormatError(f"unknown interpolation kind {interp}", 6)
    if dims != DIMS:
        raise FormatError(f"dims {dims} != {DIMS}", 7)
    if knots != KNOTS:
        raise FormatError(f"knots {knots} != {KNOTS}", 8)
    expected = _HEADER.size + TABLE_POINTS * channels
    if len(data) != expected:
        raise FormatError(f"payload length {len(data)} != {expected}", min(len(data), expected))
    entries = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).copy()
    return LutTable.from_flat(entries, channels, interp)
