"""Sparse river points, static attributes and positional features."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WGS84_A_KM = 6378.137
WGS84_B_KM = 6356.752

MIN_MEDIAN_DISCHARGE = 10.0  # m3/s


@dataclass(frozen=True)
class GeoPoint:
    id: str
    lat: float
    lon: float
    elevation: float
    grid_xy: tuple[int, int]
    static_attrs: np.ndarray = field(default_factory=lambda: np.zeros(0))


class PointSet:
    """Ordered, immutable collection of points on a regular grid.

    The point order is the spatial axis ``P`` of every tensor in the package.
    """

    def __init__(self, points, grid_width: int, grid_height: int):
        points = list(points)
        if not points:
            raise ValueError("a PointSet needs at least one point")
        n_attrs = {len(p.static_attrs) for p in points}
        if len(n_attrs) != 1:
            raise ValueError("static_attrs length differs between points")
        seen = set()
        for p in points:
            x, y = p.grid_xy
            if not (0 <= x < grid_width and 0 <= y < grid_height):
                raise ValueError(f"point {p.id} at {p.grid_xy} lies outside the {grid_width}x{grid_height} grid")
            if p.grid_xy in seen:
                raise ValueError(f"duplicate grid cell {p.grid_xy}")
            seen.add(p.grid_xy)
        ids = [p.id for p in points]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate point ids")
        self.points = tuple(points)
        self.grid_width = int(grid_width)
        self.grid_height = int(grid_height)
        self.id_to_index = {pid: i for i, pid in enumerate(ids)}

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        if (self.grid_width, self.grid_height, len(self)) != (other.grid_width, other.grid_height, len(other)):
            return False
        for a, b in zip(self.points, other.points):
            if (a.id, a.lat, a.lon, a.elevation, a.grid_xy) != (b.id, b.lat, b.lon, b.elevation, b.grid_xy):
                return False
            if not np.array_equal(a.static_attrs, b.static_attrs):
                return False
        return True

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.points]

    @property
    def grid_xy(self) -> np.ndarray:
        return np.array([p.grid_xy for p in self.points], dtype=np.int64)

    @property
    def n_static(self) -> int:
        return len(self.points[0].static_attrs)

    def static_matrix(self, positional: bool = False) -> np.ndarray:
        """Return static attributes as a ``[P, V_s]`` array.

        With ``positional=True`` the WGS-84 Cartesian position, in units of the
        semi-major axis, is appended as three extra columns.
        """
        s = np.stack([np.asarray(p.static_attrs, dtype=float) for p in self.points])
        if positional:
            lat = np.array([p.lat for p in self.points])
            lon = np.array([p.lon for p in self.points])
            h = np.array([p.elevation for p in self.points]) / 1000.0
            xyz = np.stack(wgs84_cartesian(lat, lon, h), axis=-1) / WGS84_A_KM
            s = np.concatenate([s, xyz], axis=1)
        return s

    def permuted(self, perm) -> "PointSet":
        return PointSet([self.points[i] for i in perm], self.grid_width, self.grid_height)

    # CSV round trip ------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"# grid {self.grid_width} {self.grid_height}"])
        w.writerow(["id", "lat", "lon", "elev", "gx", "gy"] + [f"s{i}" for i in range(self.n_static)])
        for p in self.points:
            w.writerow([p.id, repr(float(p.lat)), repr(float(p.lon)), repr(float(p.elevation)),
                        p.grid_xy[0], p.grid_xy[1]] + [repr(float(v)) for v in p.static_attrs])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid_width: int | None = None, grid_height: int | None = None) -> "PointSet":
        lines = text.splitlines()
        if lines and lines[0].startswith("# grid"):
            _, _, gw, gh = lines[0].split()
            grid_width = grid_width or int(gw)
            grid_height = grid_height or int(gh)
            lines = lines[1:]
        reader = csv.reader(lines)
        header = next(reader)
        if header[:6] != ["id", "lat", "lon", "elev", "gx", "gy"]:
            raise ValueError(f"unexpected PointSet header: {header}")
        points = []
        for row in reader:
            if not row:
                continue
            points.append(GeoPoint(
                id=row[0], lat=float(row[1]), lon=float(row[2]), elevation=float(row[3]),
                grid_xy=(int(row[4]), int(row[5])),
                static_attrs=np.array([float(v) for v in row[6:]], dtype=float),
            ))
        if grid_width is None or grid_height is None:
            xy = np.array([p.grid_xy for p in points])
            grid_width = grid_width or int(xy[:, 0].max()) + 1
            grid_height = grid_height or int(xy[:, 1].max()) + 1
        return cls(points, grid_width, grid_height)

    def save_csv(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load_csv(cls, path):
        return cls.from_csv(Path(path).read_text())


def wgs84_cartesian(lat, lon, height_km=0.0):
    """Earth-centred Cartesian coordinates (km) of points on the WGS-84 ellipsoid.

    ``lat`` and ``lon`` are in degrees, ``height_km`` is the height above the
    ellipsoid in kilometres. Works elementwise on scalars or arrays.
    """
    phi = np.radians(lat)
    lam = np.radians(lon)
    a, b = WGS84_A_KM, WGS84_B_KM
    e2 = (a * a - b * b) / (a * a)
    n = a / np.sqrt(1.0 - e2 * np.sin(phi) ** 2)
    x = (n + height_km) * np.cos(phi) * np.cos(lam)
    y = (n + height_km) * np.cos(phi) * np.sin(lam)
    z = ((1.0 - e2) * n + height_km) * np.sin(phi)
    return x, y, z


def diagnostic_mask(grid_mask, median_discharge, gauged, threshold=MIN_MEDIAN_DISCHARGE):
    """Select grid cells worth forecasting.

    Keeps land cells whose median discharge reaches ``threshold``, land cells
    within Chebyshev distance 1 of such a cell, and every gauged cell.
    Arrays are indexed ``[y, x]``; neighbours outside the grid are ignored.
    Returns a boolean keep-mask of the same shape.
    """
    land = np.asarray(grid_mask, dtype=bool)
    q = np.asarray(median_discharge, dtype=float)
    g = np.asarray(gauged, dtype=bool)
    if not (land.shape == q.shape == g.shape):
        raise ValueError("grid_mask, median_discharge and gauged must share a shape")
    wet = land & (q >= threshold)
    near = wet.copy()
    h, w = wet.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.zeros_like(wet)
            ys_dst = slice(max(dy, 0), h + min(dy, 0))
            ys_src = slice(max(-dy, 0), h + min(-dy, 0))
            xs_dst = slice(max(dx, 0), w + min(dx, 0))
            xs_src = slice(max(-dx, 0), w + min(-dx, 0))
            shifted[ys_dst, xs_dst] = wet[ys_src, xs_src]
            near |= shifted
    keep = (land & near) | g
    if not keep.any():
        raise ValueError("no diagnostic points")
    return keep


def filter_diagnostic_points(grid_mask, median_discharge, gauged, lat=None, lon=None,
                             elevation=None, static=None, threshold=MIN_MEDIAN_DISCHARGE) -> PointSet:
    """Diagnostic points as a PointSet (see :func:`diagnostic_mask`).

    Cell coordinates default to plate carree cell centres of the grid.
    """
    keep = diagnostic_mask(grid_mask, median_discharge, gauged, threshold)
    h, w = keep.shape
    if lat is None or lon is None:
        lat, lon = grid_cell_centres(w, h)
    if elevation is None:
        elevation = np.zeros((h, w))
    return pointset_from_mask(keep, lat, lon, elevation, static)


def grid_cell_centres(width, height):
    """Plate carree ``(lat, lon)`` of cell centres, each shaped ``[height, width]``."""
    ys, xs = np.mgrid[0:height, 0:width]
    lat = 90.0 - (ys + 0.5) * 180.0 / height
    lon = -180.0 + (xs + 0.5) * 360.0 / width
    return lat, lon


def pointset_from_mask(keep, lat, lon, elevation, static=None, ids=None) -> PointSet:
    """Build a PointSet from a ``[y, x]`` keep-mask and per-cell fields."""
    keep = np.asarray(keep, dtype=bool)
    h, w = keep.shape
    ys, xs = np.nonzero(keep)
    points = []
    for k, (y, x) in enumerate(zip(ys, xs)):
        attrs = np.zeros(0) if static is None else np.asarray(static[y, x], dtype=float)
        pid = f"p{y * w + x}" if ids is None else ids[y, x]
        points.append(GeoPoint(pid, float(lat[y, x]), float(lon[y, x]), float(elevation[y, x]),
                               (int(x), int(y)), attrs))
    return PointSet(points, w, h)
