"""Space-filling curves over the point grid and the serialization they induce.

A curve visits every cell of a ``width x height`` rectangle once. Its position
along the tour is the cell's 64-bit code; sorting the sparse points of a
:class:`~rivermamba.geometry.PointSet` by code gives the serialization order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit


class CurveKind(str, enum.Enum):
    SWEEP_H = "sweep_h"
    SWEEP_V = "sweep_v"
    ZIGZAG_H = "zigzag_h"
    ZIGZAG_V = "zigzag_v"
    GILBERT = "gilbert"
    GILBERT_T = "gilbert_t"

    @classmethod
    def parse(cls, name) -> "CurveKind":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "_")
        aliases = {"gilbert_transposed": "gilbert_t", "gilbert_trans": "gilbert_t"}
        return cls(aliases.get(key, key))


# block-to-block rotation used by hindcast and forecast stacks
CURVE_CYCLE = (CurveKind.SWEEP_H, CurveKind.SWEEP_V, CurveKind.GILBERT, CurveKind.GILBERT_T)


@njit(cache=True)
def _sgn(v):
    return (v > 0) - (v < 0)


@njit(cache=True)
def _gilbert(x, y, ax, ay, bx, by, out, i):
    # Generalized Hilbert recursion: walk the rectangle spanned by the major
    # axis (ax, ay) and the minor axis (bx, by) starting at (x, y). Cells are
    # written to out[i:], the next free row is returned.
    w = abs(ax + ay)
    h = abs(bx + by)
    dax, day = _sgn(ax), _sgn(ay)
    dbx, dby = _sgn(bx), _sgn(by)

    if h == 1:
        for _ in range(w):
            out[i, 0], out[i, 1] = x, y
            x, y, i = x + dax, y + day, i + 1
        return i
    if w == 1:
        for _ in range(h):
            out[i, 0], out[i, 1] = x, y
            x, y, i = x + dbx, y + dby, i + 1
        return i

    ax2, ay2 = ax // 2, ay // 2
    bx2, by2 = bx // 2, by // 2
    w2 = abs(ax2 + ay2)
    h2 = abs(bx2 + by2)

    if 2 * w > 3 * h:
        if (w2 % 2) and (w > 2):
            ax2, ay2 = ax2 + dax, ay2 + day
        i = _gilbert(x, y, ax2, ay2, bx, by, out, i)
        return _gilbert(x + ax2, y + ay2, ax - ax2, ay - ay2, bx, by, out, i)
    if (h2 % 2) and (h > 2):
        bx2, by2 = bx2 + dbx, by2 + dby
    i = _gilbert(x, y, bx2, by2, ax2, ay2, out, i)
    i = _gilbert(x + bx2, y + by2, ax, ay, bx - bx2, by - by2, out, i)
    return _gilbert(x + (ax - dax) + (bx2 - dbx), y + (ay - day) + (by2 - dby),
                    -bx2, -by2, -(ax - ax2), -(ay - ay2), out, i)


@lru_cache(maxsize=256)
def _gilbert_cached(width: int, height: int) -> np.ndarray:
    out = np.empty((width * height, 2), dtype=np.int64)
    # A tour from (0, 0) that ends on the same side needs an even side along
    # the major axis, otherwise the checkerboard parity forces a diagonal step.
    horizontal = width >= height
    if horizontal and width % 2 == 1 and height % 2 == 0:
        horizontal = False
    elif not horizontal and height % 2 == 1 and width % 2 == 0:
        horizontal = True
    if horizontal:
        _gilbert(0, 0, width, 0, 0, height, out, 0)
    else:
        _gilbert(0, 0, 0, height, width, 0, out, 0)
    out.flags.writeable = False
    return out


def gilbert_order(width: int, height: int) -> np.ndarray:
    """Generalized Hilbert tour of a ``width x height`` rectangle as ``[W*H, 2]`` (x, y)."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    return _gilbert_cached(int(width), int(height)).copy()


def transpose_order(order, height: int) -> np.ndarray:
    """Reflect a tour vertically: ``y -> height - 1 - y``.

    Zero-based form of ``y' = H - y`` for ``y`` in ``1..H``.
    """
    order = np.array(order, dtype=np.int64).reshape(-1, 2)
    order[:, 1] = height - 1 - order[:, 1]
    return order


def sweep_order(width: int, height: int, vertical: bool = False) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    if vertical:
        xs, ys = xs.T, ys.T
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.int64)


def zigzag_order(width: int, height: int, vertical: bool = False) -> np.ndarray:
    if vertical:
        return zigzag_order(height, width)[:, ::-1].copy()
    ys, xs = np.mgrid[0:height, 0:width]
    xs[1::2] = xs[1::2, ::-1]
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.int64)


def curve_tour(kind, width: int, height: int) -> np.ndarray:
    """Full-rectangle tour of ``kind`` as ``[W*H, 2]`` (x, y) cells."""
    kind = CurveKind.parse(kind)
    if kind is CurveKind.SWEEP_H:
        return sweep_order(width, height)
    if kind is CurveKind.SWEEP_V:
        return sweep_order(width, height, vertical=True)
    if kind is CurveKind.ZIGZAG_H:
        return zigzag_order(width, height)
    if kind is CurveKind.ZIGZAG_V:
        return zigzag_order(width, height, vertical=True)
    if kind is CurveKind.GILBERT:
        return gilbert_order(width, height)
    return transpose_order(gilbert_order(width, height), height)


@lru_cache(maxsize=256)
def _code_table(kind: CurveKind, width: int, height: int) -> np.ndarray:
    tour = curve_tour(kind, width, height)
    table = np.empty((height, width), dtype=np.int64)
    table[tour[:, 1], tour[:, 0]] = np.arange(len(tour), dtype=np.int64)
    table.flags.writeable = False
    return table


def encode(kind, xy, width: int, height: int) -> np.ndarray:
    """64-bit position along the curve of each ``(x, y)`` cell."""
    xy = np.asarray(xy, dtype=np.int64).reshape(-1, 2)
    return _code_table(CurveKind.parse(kind), int(width), int(height))[xy[:, 1], xy[:, 0]]


def decode(kind, codes, width: int, height: int) -> np.ndarray:
    """Inverse of :func:`encode`: cells at the given curve positions."""
    tour = curve_tour(kind, width, height)
    return tour[np.asarray(codes, dtype=np.int64)]


@dataclass(frozen=True)
class SerializationOrder:
    kind: CurveKind
    perm: np.ndarray  # point index at each curve position
    inv: np.ndarray  # curve position of each point
    codes: np.ndarray  # 64-bit code of each point, in point order

    def __len__(self):
        return len(self.perm)


def order_from_perm(perm, kind=CurveKind.SWEEP_H, codes=None) -> SerializationOrder:
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm), dtype=np.int64)
    if codes is None:
        codes = inv.copy()
    return SerializationOrder(CurveKind.parse(kind), perm, inv, np.asarray(codes, dtype=np.int64))


def serialize(points, kind) -> SerializationOrder:
    """Order the points of a PointSet along the curve ``kind``."""
    xy = points.grid_xy
    if len({tuple(c) for c in xy}) != len(xy):
        raise ValueError("duplicate grid cells cannot be serialized")
    codes = encode(kind, xy, points.grid_width, points.grid_height)
    perm = np.argsort(codes, kind="stable")
    return order_from_perm(perm, kind, codes)


def apply_order(tensor, order: SerializationOrder, axis: int = -2):
    """Permute the point axis (default: second to last) into curve order."""
    return _take(tensor, order.perm, axis)


def inverse_order(tensor, order: SerializationOrder, axis: int = -2):
    """Undo :func:`apply_order`."""
    return _take(tensor, order.inv, axis)


def _take(tensor, index, axis):
    n = tensor.shape[axis]
    if n != len(index):
        raise ValueError(f"point axis has length {n}, order has length {len(index)}")
    if hasattr(tensor, "take"):
        return tensor.take(index, axis=axis)
    return np.take(tensor, index, axis=axis)


def split_curve(order: SerializationOrder, max_len: int) -> list[np.ndarray]:
    """Cut the curve into contiguous chunks of at most ``max_len`` point indices."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return [order.perm[i:i + max_len] for i in range(0, len(order.perm), max_len)]


def flatten_spatial_first(tensor):
    """``[T, P, K] -> [T*P, K]``: every point at t=0, then every point at t=1, ..."""
    t, p, k = tensor.shape
    return tensor.reshape(t * p, k)


def unflatten_spatial_first(seq, t: int):
    n, k = seq.shape
    return seq.reshape(t, n // t, k)
