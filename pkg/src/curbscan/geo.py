"""Road polyline sampling: equally spaced points plus four-heading requests.

Coordinates are (latitude, longitude) in degrees. Distances use the
haversine formula on a sphere of mean Earth radius; interpolation between
polyline vertices is a spherical slerp, so sample spacing is uniform in
geodesic arclength. At the 15 m scale used here the spherical model is
well under 0.1% off the ellipsoid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

EARTH_RADIUS_M = 6_371_008.8

# 50 ft expressed in meters; the default sampling interval.
DEFAULT_INTERVAL_M = 15.24

HEADINGS_DEG = (0, 90, 180, 270)

IMAGE_SIZE_PX = 640

# 7 decimal places ~ 1 cm; keeps serialized coordinates stable for caching.
COORD_DECIMALS = 7


class DegeneratePolyline(ValueError):
    """Polyline has zero total length; nothing can be sampled from it."""


@dataclass(frozen=True)
class RoadPolyline:
    id: str
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 2:
            raise ValueError(f"polyline {self.id!r} needs at least 2 vertices")
        for lat, lon in self.vertices:
            if not (-90.0 <= lat <= 90.0):
                raise ValueError(f"latitude out of range: {lat}")
            if not (-180.0 <= lon <= 180.0):
                raise ValueError(f"longitude out of range: {lon}")
        object.__setattr__(self, "vertices", tuple((float(a), float(b)) for a, b in self.vertices))


@dataclass(frozen=True)
class SamplePoint:
    road_id: str
    index: int
    position: tuple[float, float]
    arclength_m: float


@dataclass(frozen=True)
class ImageRequest:
    sample: SamplePoint
    heading_deg: int
    width_px: int = IMAGE_SIZE_PX
    height_px: int = IMAGE_SIZE_PX

    def __post_init__(self) -> None:
        if self.heading_deg not in HEADINGS_DEG:
            raise ValueError(f"heading must be one of {HEADINGS_DEG}, got {self.heading_deg}")


def geodesic_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in meters between two (lat, lon) points."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _to_unit(lat: float, lon: float) -> tuple[float, float, float]:
    phi, lam = math.radians(lat), math.radians(lon)
    return (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))


def _to_latlon(v: tuple[float, float, float]) -> tuple[float, float]:
    x, y, z = v
    return (math.degrees(math.atan2(z, math.hypot(x, y))), math.degrees(math.atan2(y, x)))


def _slerp(a: tuple[float, float], b: tuple[float, float], t: float) -> tuple[float, float]:
    """Interpolate along the great circle from a to b, t in [0, 1]."""
    va, vb = _to_unit(*a), _to_unit(*b)
    dot = max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb))))
    omega = math.acos(dot)
    if omega < 1e-12:
        return a
    s = math.sin(omega)
    fa, fb = math.sin((1.0 - t) * omega) / s, math.sin(t * omega) / s
    return _to_latlon(tuple(fa * x + fb * y for x, y in zip(va, vb)))


def polyline_length(road: RoadPolyline) -> float:
    return sum(
        geodesic_distance(a, b) for a, b in zip(road.vertices, road.vertices[1:])
    )


def sample_polyline(road: RoadPolyline, interval_m: float = DEFAULT_INTERVAL_M) -> list[SamplePoint]:
    """Sample points at arclengths 0, d, 2d, ... along the polyline.

    Emits floor(L/d) + 1 points. The final vertex is not emitted unless it
    happens to land on a multiple of d, which keeps spacing uniform.

    Raises DegeneratePolyline when the total length is zero.
    """
    if interval_m <= 0:
        raise ValueError(f"interval must be positive, got {interval_m}")
    seg_lengths = [geodesic_distance(a, b) for a, b in zip(road.vertices, road.vertices[1:])]
    total = sum(seg_lengths)
    if total == 0.0:
        raise DegeneratePolyline(f"polyline {road.id!r} has zero length")

    # guard against L/d sitting a few ulps below an integer
    count = int(math.floor(total / interval_m + 1e-9)) + 1

    points: list[SamplePoint] = []
    seg = 0
    cum = 0.0
    for k in range(count):
        target = k * interval_m
        while seg < len(seg_lengths) - 1 and cum + seg_lengths[seg] < target - 1e-9:
            cum += seg_lengths[seg]
            seg += 1
        length = seg_lengths[seg]
        t = 0.0 if length == 0.0 else (target - cum) / length
        t = max(0.0, min(1.0, t))
        pos = _slerp(road.vertices[seg], road.vertices[seg + 1], t)
        points.append(SamplePoint(road_id=road.id, index=k, position=pos, arclength_m=target))
    return points


def expand_headings(points: Sequence[SamplePoint]) -> list[ImageRequest]:
    """Four image requests per point, headings ascending, point order kept."""
    return [
        ImageRequest(sample=p, heading_deg=h)
        for p in points
        for h in HEADINGS_DEG
    ]


def load_geojson_roads(path: str | Path) -> list[RoadPolyline]:
    """Read LineString features from a GeoJSON FeatureCollection.

    Each feature must carry a string property `id`. GeoJSON stores
    coordinates as [lon, lat]; they are flipped to (lat, lon) here.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: expected a FeatureCollection")
    roads = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        props = feature.get("properties") or {}
        if "id" not in props:
            raise ValueError(f"{path}: LineString feature without an 'id' property")
        vertices = tuple((lat, lon) for lon, lat in geom["coordinates"])
        roads.append(RoadPolyline(id=str(props["id"]), vertices=vertices))
    return roads


def write_requests_csv(requests: Iterable[ImageRequest], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["road_id", "index", "lat", "lon", "heading", "width", "height"])
        for req in requests:
            lat, lon = req.sample.position
            writer.writerow([
                req.sample.road_id,
                req.sample.index,
                f"{lat:.{COORD_DECIMALS}f}",
                f"{lon:.{COORD_DECIMALS}f}",
                req.heading_deg,
                req.width_px,
                req.height_px,
            ])


def read_requests_csv(path: str | Path) -> list[ImageRequest]:
    requests = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            sample = SamplePoint(
                road_id=row["road_id"],
                index=int(row["index"]),
                position=(float(row["lat"]), float(row["lon"])),
                arclength_m=int(row["index"]) * DEFAULT_INTERVAL_M,
            )
            requests.append(ImageRequest(
                sample=sample,
                heading_deg=int(row["heading"]),
                width_px=int(row["width"]),
                height_px=int(row["height"]),
            ))
    return requests
