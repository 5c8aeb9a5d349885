"""Coordinates, geodesic distance, and threshold-based success metrics.

All distances are kilometers end to end; coordinates are WGS84-style
degrees. Distances are plain floats rather than a wrapper type: every
function here documents its unit, and nothing else on the wire carries one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError

# Mean Earth radius; the convention across geolocalization evaluation code.
EARTH_RADIUS_KM = 6371.0

# No two points on the sphere are farther apart than half the circumference.
MAX_DISTANCE_KM = math.pi * EARTH_RADIUS_KM

DEFAULT_THRESHOLDS_KM = (1.0, 25.0, 200.0, 750.0, 2500.0)


@dataclass(frozen=True)
class GeoCoordinate:
    """A point on Earth in degrees latitude/longitude.

    Out-of-range longitudes are rejected rather than wrapped: silently
    normalizing hides upstream data bugs.
    """

    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not math.isfinite(lat) or not -90.0 <= lat <= 90.0:
            raise ValidationError(f"lat must be finite and in [-90, 90], got {self.lat!r}")
        if not math.isfinite(lon) or not -180.0 <= lon <= 180.0:
            raise ValidationError(f"lon must be finite and in [-180, 180], got {self.lon!r}")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class ThresholdSet:
    """Strictly increasing distance thresholds in kilometers."""

    values: tuple = DEFAULT_THRESHOLDS_KM

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValidationError("threshold set must not be empty")
        for v in vals:
            if not math.isfinite(v) or v <= 0.0:
                raise ValidationError(f"thresholds must be finite and > 0, got {v!r}")
        if any(a >= b for a, b in zip(vals, vals[1:])):
            raise ValidationError(f"thresholds must be strictly increasing, got {vals}")
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def geodesic_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Haversine great-circle distance between two coordinates, in km.

    Symmetric, and zero iff the inputs are identical up to floating
    rounding. Routed through the kernel backend so scalar and vectorized
    callers share one formula.
    """
    d = _kernels.haversine_km(
        np.array([a.lat]), np.array([a.lon]), np.array([b.lat]), np.array([b.lon]),
        EARTH_RADIUS_KM,
    )
    return float(d[0])


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized great-circle distance over degree arrays, in km."""
    return _kernels.haversine_km(
        np.asarray(lat1, dtype=np.float64),
        np.asarray(lon1, dtype=np.float64),
        np.asarray(lat2, dtype=np.float64),
        np.asarray(lon2, dtype=np.float64),
        EARTH_RADIUS_KM,
    )


def within_threshold(d: float, t: float) -> bool:
    """True iff distance d is within threshold t (inclusive), both in km."""
    if not math.isfinite(t) or t <= 0.0:
        raise ValidationError(f"threshold must be finite and > 0, got {t!r}")
    if not math.isfinite(d) or d < 0.0:
        raise ValidationError(f"distance must be finite and >= 0, got {d!r}")
    return d <= t


@dataclass(frozen=True)
class ThresholdAccuracy:
    """Per-threshold success percentages plus their unweighted mean."""

    thresholds: ThresholdSet
    per_threshold: tuple
    average: float


def accuracy_at_thresholds(distances, thresholds: ThresholdSet | None = None) -> ThresholdAccuracy:
    """Percentage of distances within each threshold (inclusive).

    The average is the unweighted mean across thresholds, the "Average"
    column of the usual accuracy tables.
    """
    ts = thresholds if thresholds is not None else ThresholdSet()
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ValidationError("no records")
    if not np.all(np.isfinite(d)) or np.any(d < 0.0):
        raise ValidationError("distances must be finite and >= 0")
    per = tuple(100.0 * int(np.count_nonzero(d <= t)) / d.size for t in ts)
    return ThresholdAccuracy(ts, per, sum(per) / len(per))
