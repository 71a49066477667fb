"""Geodetic-to-scene coordinate conversion and adaptive level-of-detail grids.

Axis convention, used everywhere in this package: east -> x, up -> y,
north -> z. Horizontal scene axes come from per-axis great-circle distances
(longitude varying for x, latitude varying for z); the vertical axis is the
scaled altitude difference.

Method selection: operational extents above EarthModel.area_threshold
(default 1 km^2) use great-circle distances; smaller areas use the local
tangent plane approximation, which is cheaper and agrees with the
great-circle per-axis values to better than 1e-5 relative error for angular
separations under 0.005 rad.

All angles are radians; all lengths are meters unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
AREA_THRESHOLD_M2 = 1_000_000.0  # 1 km^2


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic coordinate: latitude/longitude in radians, altitude in meters."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.latitude) <= math.pi / 2:
            raise ValueError(f"latitude {self.latitude} outside [-pi/2, pi/2]")
        if not abs(self.longitude) <= math.pi:
            raise ValueError(f"longitude {self.longitude} outside [-pi, pi]")
        if not math.isfinite(self.altitude):
            raise ValueError("altitude must be finite")

    @staticmethod
    def from_degrees(lat_deg: float, lon_deg: float, altitude: float = 0.0) -> "GeoPoint":
        return GeoPoint(math.radians(lat_deg), math.radians(lon_deg), altitude)


@dataclass(frozen=True)
class LocalOffset:
    """Tangent-plane offset from a reference point: east, up, north meters."""

    east: float
    up: float
    north: float

    def __post_init__(self) -> None:
        for v in (self.east, self.up, self.north):
            if not math.isfinite(v):
                raise ValueError("offset components must be finite")


@dataclass(frozen=True)
class SceneCoord:
    """Scene-space coordinate u = scale * offset, same axis convention."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class EarthModel:
    """Spherical earth radius plus the large/small-area switch threshold."""

    radius: float = EARTH_RADIUS_M
    area_threshold: float = AREA_THRESHOLD_M2

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.area_threshold <= 0:
            raise ValueError("area_threshold must be positive")


def haversine_distance(a: GeoPoint, b: GeoPoint, earth: EarthModel = EarthModel()) -> float:
    """Great-circle distance between two points on the spherical earth.

    Uses the atan2 form of the haversine conversion (identical value to the
    arcsin form, better conditioned near antipodal points). Symmetric,
    non-negative, bounded by pi * radius.
    """
    dphi = b.latitude - a.latitude
    dlmb = b.longitude - a.longitude
    h = math.sin(dphi / 2) ** 2 + math.cos(a.latitude) * math.cos(b.latitude) * math.sin(dlmb / 2) ** 2
    h = min(max(h, 0.0), 1.0)
    return earth.radius * 2.0 * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def tangent_plane_offset(
    ref: GeoPoint, target: GeoPoint, earth: EarthModel = EarthModel()
) -> LocalOffset:
    """Small-area flat-earth offset of target relative to ref.

    east = r * cos(lat_ref) * dlon, north = r * dlat, up = dalt. Valid when
    the operational area is below the earth model's threshold.
    """
    east = earth.radius * math.cos(ref.latitude) * (target.longitude - ref.longitude)
    north = earth.radius * (target.latitude - ref.latitude)
    return LocalOffset(east, target.altitude - ref.altitude, north)


def _axis_distances_haversine(ref: GeoPoint, target: GeoPoint, earth: EarthModel) -> tuple[float, float]:
    """Per-axis great-circle magnitudes: (east-axis, north-axis)."""
    east = haversine_distance(
        GeoPoint(ref.latitude, ref.longitude, 0.0),
        GeoPoint(ref.latitude, target.longitude, 0.0),
        earth,
    )
    north = haversine_distance(
        GeoPoint(ref.latitude, ref.longitude, 0.0),
        GeoPoint(target.latitude, ref.longitude, 0.0),
        earth,
    )
    return east, north


def gps_to_scene(
    ref: GeoPoint,
    target: GeoPoint,
    scale: float,
    earth: EarthModel = EarthModel(),
    extent: float = 0.0,
) -> SceneCoord:
    """Convert a geodetic target to scene coordinates around a reference.

    `extent` is the operational bounding-box area in m^2, supplied by the
    caller; above the earth model's threshold the per-axis great-circle
    method is used, otherwise the tangent plane. Signs follow the direction
    of the target from the reference. Vertical is scale * (alt - alt_ref).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if extent > earth.area_threshold:
        east, north = _axis_distances_haversine(ref, target, earth)
        if target.longitude < ref.longitude:
            east = -east
        if target.latitude < ref.latitude:
            north = -north
    else:
        off = tangent_plane_offset(ref, target, earth)
        east, north = off.east, off.north
    return SceneCoord(scale * east, scale * (target.altitude - ref.altitude), scale * north)


def scene_to_gps(
    ref: GeoPoint,
    coord: SceneCoord,
    scale: float,
    earth: EarthModel = EarthModel(),
) -> GeoPoint:
    """Inverse of the tangent-plane branch of gps_to_scene.

    Exact for small-area conversions away from the poles; used to round-trip
    scene coordinates back to geodetic positions.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    east = coord.x / scale
    north = coord.z / scale
    lat = ref.latitude + north / earth.radius
    lon = ref.longitude + east / (earth.radius * math.cos(ref.latitude))
    return GeoPoint(lat, lon, ref.altitude + coord.y / scale)


class LodLevel(IntEnum):
    HIGH = 0
    MEDIUM = 1
    LOW = 2


@dataclass(frozen=True)
class LodGrid:
    """Uniform 3D cell grid with per-cell detail levels.

    `cells` holds LodLevel codes; `critical_regions` is the caller-identified
    set of cell indices that must stay at full fidelity. `proximity_threshold`
    is in meters, converted to cell units through `cell_size`.
    """

    cells: np.ndarray
    critical_regions: frozenset[tuple[int, int, int]] = frozenset()
    proximity_threshold: float = 0.0
    cell_size: float = 1.0

    def __post_init__(self) -> None:
        if self.cells.ndim != 3:
            raise ValueError("cells must be a 3D array")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.proximity_threshold < 0:
            raise ValueError("proximity_threshold must be >= 0")
        shape = self.cells.shape
        for idx in self.critical_regions:
            if any(not 0 <= i < n for i, n in zip(idx, shape)):
                raise ValueError(f"critical cell {idx} outside grid {shape}")

    @staticmethod
    def empty(shape: tuple[int, int, int], **kwargs) -> "LodGrid":
        return LodGrid(np.full(shape, LodLevel.LOW, dtype=np.uint8), **kwargs)

    def level_at(self, idx: tuple[int, int, int]) -> LodLevel:
        return LodLevel(int(self.cells[idx]))


def assign_lod(grid: LodGrid) -> LodGrid:
    """Assign detail levels from critical regions and proximity.

    Cells in a critical region get HIGH; cells whose center lies strictly
    within the proximity threshold of any critical cell center get MEDIUM;
    everything else gets LOW. Idempotent: levels depend only on the region
    set and threshold, never on the incoming levels.
    """
    shape = grid.cells.shape
    cells = np.full(shape, LodLevel.LOW, dtype=np.uint8)
    if cells.size == 0 or not grid.critical_regions:
        return LodGrid(cells, grid.critical_regions, grid.proximity_threshold, grid.cell_size)

    crit = np.array(sorted(grid.critical_regions), dtype=np.float64)
    ix, iy, iz = np.indices(shape, dtype=np.float64)
    centers = np.stack([ix, iy, iz], axis=-1)
    # pairwise distance to the nearest critical cell center, in meters
    deltas = centers[..., None, :] - crit[None, None, None, :, :]
    dist = np.sqrt((deltas**2).sum(axis=-1)).min(axis=-1) * grid.cell_size

    cells[dist < grid.proximity_threshold] = LodLevel.MEDIUM
    for idx in grid.critical_regions:
        cells[idx] = LodLevel.HIGH
    return LodGrid(cells, grid.critical_regions, grid.proximity_threshold, grid.cell_size)
