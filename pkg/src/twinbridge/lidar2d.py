"""3D point cloud to 2D range-scan projection and obstacle flagging.

The projection takes, per azimuth bin, the minimum range among points whose
height falls inside a band around the sensor plane; bins with no qualifying
point carry no return. The compact scan (4 bytes per bin) stands in for raw
clouds (12 bytes per point) in bandwidth comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Wire sentinel for bins without a return: float32 max, little-endian.
NO_RETURN = float(np.finfo(np.float32).max)

BYTES_PER_BIN = 4
BYTES_PER_POINT = 12


def wrap_azimuth(theta: float | np.ndarray) -> float | np.ndarray:
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(theta) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class PointCloud3D:
    """Cylindrical points (range, azimuth, height); azimuth in [-pi, pi)."""

    r: np.ndarray
    theta: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=np.float64)
        theta = wrap_azimuth(np.asarray(self.theta, dtype=np.float64))
        z = np.asarray(self.z, dtype=np.float64)
        if not (r.shape == theta.shape == z.shape) or r.ndim != 1:
            raise ValueError("r, theta, z must be equal-length 1D arrays")
        if np.any(r < 0):
            raise ValueError("ranges must be >= 0")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "z", z)

    @staticmethod
    def from_cartesian(x, y, z) -> "PointCloud3D":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return PointCloud3D(np.hypot(x, y), np.arctan2(y, x), np.asarray(z, dtype=np.float64))

    def __len__(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class Scan2D:
    """Fixed-bin 2D scan over [-pi, pi); math.inf marks bins with no return."""

    ranges: np.ndarray
    obstacle_threshold: float

    def __post_init__(self) -> None:
        ranges = np.asarray(self.ranges, dtype=np.float64)
        if ranges.ndim != 1 or ranges.shape[0] < 1:
            raise ValueError("scan needs at least one bin")
        if np.any(ranges[np.isfinite(ranges)] < 0):
            raise ValueError("bin ranges must be >= 0")
        object.__setattr__(self, "ranges", ranges)

    @property
    def n_bins(self) -> int:
        return self.ranges.shape[0]

    def to_bytes(self) -> bytes:
        """Packed little-endian float32 per bin; NO_RETURN for empty bins."""
        out = np.where(np.isfinite(self.ranges), self.ranges, NO_RETURN).astype("<f4")
        return out.tobytes()

    @staticmethod
    def from_bytes(data: bytes, obstacle_threshold: float) -> "Scan2D":
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
        ranges = np.where(raw >= NO_RETURN, math.inf, raw)
        return Scan2D(ranges, obstacle_threshold)


def azimuth_bin(theta: float | np.ndarray, n_bins: int) -> np.ndarray:
    """Bin index in [0, n_bins) for azimuths in [-pi, pi)."""
    idx = np.floor((np.asarray(theta) + math.pi) / TWO_PI * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def project(
    cloud: PointCloud3D,
    n_bins: int,
    z_band: tuple[float, float],
    obstacle_threshold: float = 1.0,
) -> Scan2D:
    """Reduce a 3D cloud to a 2D scan: per-bin minimum range inside the band.

    Points with height outside [z_lo, z_hi] never contribute. Permutation
    invariant; adding points can only shrink bin ranges.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    z_lo, z_hi = z_band
    if not z_lo < z_hi:
        raise ValueError("z_band must satisfy z_lo < z_hi")
    ranges = np.full(n_bins, math.inf)
    mask = (cloud.z >= z_lo) & (cloud.z <= z_hi)
    if mask.any():
        bins = azimuth_bin(cloud.theta[mask], n_bins)
        np.minimum.at(ranges, bins, cloud.r[mask])
    return Scan2D(ranges, obstacle_threshold)


def flag_obstacles(scan: Scan2D) -> list[tuple[int, float]]:
    """Bins whose range is strictly below the obstacle threshold, by index."""
    hits = np.nonzero(scan.ranges < scan.obstacle_threshold)[0]
    return [(int(i), float(scan.ranges[i])) for i in hits]


def scan_payload_size(scan: Scan2D) -> int:
    return scan.n_bins * BYTES_PER_BIN


def cloud_payload_size(cloud: PointCloud3D) -> int:
    return len(cloud) * BYTES_PER_POINT


@dataclass(frozen=True)
class PayloadComparison:
    """Scan-vs-cloud serialized sizes; reduction is None when undefined."""

    scan_bytes: int
    cloud_bytes: int
    reduction: float | None

    def __str__(self) -> str:
        if self.reduction is None:
            return f"{self.scan_bytes} B vs {self.cloud_bytes} B (no reduction defined)"
        return f"{self.scan_bytes} B vs {self.cloud_bytes} B ({self.reduction:.1%} reduction)"


def payload_comparison(scan: Scan2D, cloud: PointCloud3D) -> PayloadComparison:
    """Compare scan and cloud payload sizes; empty clouds give no ratio."""
    s = scan_payload_size(scan)
    c = cloud_payload_size(cloud)
    if c == 0:
        return PayloadComparison(s, c, None)
    return PayloadComparison(s, c, 1.0 - s / c)


def cloud_to_bytes(cloud: PointCloud3D) -> bytes:
    """Packed (r, theta, z) float32 triples, little-endian."""
    out = np.stack([cloud.r, cloud.theta, cloud.z], axis=1).astype("<f4")
    return out.tobytes()


def cloud_from_bytes(data: bytes) -> PointCloud3D:
    if len(data) % BYTES_PER_POINT:
        raise ValueError("cloud buffer is not a whole number of 12-byte points")
    raw = np.frombuffer(data, dtype="<f4").reshape(-1, 3).astype(np.float64)
    return PointCloud3D(raw[:, 0], raw[:, 1], raw[:, 2])


def cloud_to_csv(cloud: PointCloud3D, path) -> None:
    """Write r,theta,z rows with a header line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("r,theta,z\n")
        for r, theta, z in zip(cloud.r, cloud.theta, cloud.z):
            fh.write(f"{float(r)!r},{float(theta)!r},{float(z)!r}\n")


def cloud_from_csv(path) -> PointCloud3D:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    if rows.size == 0:
        return PointCloud3D(np.array([]), np.array([]), np.array([]))
    if rows.shape[1] != 3:
        raise ValueError("cloud CSV needs r,theta,z columns")
    return PointCloud3D(rows[:, 0], rows[:, 1], rows[:, 2])
