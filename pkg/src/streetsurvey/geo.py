"""Sample-site geometry: random points in a study region, relocation to buildings.

All geometry treats coordinates as planar at city scale (not valid across the
antimeridian or at the poles); distances use a spherical earth model.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

EARTH_RADIUS_M = 6_371_008.8

MIN_SPACING_DEFAULT_M = 50.0
MAX_RELOCATE_RADIUS_DEFAULT_M = 250.0

# rejection sampling gives up after this many attempts per requested point
ATTEMPTS_PER_POINT = 10_000


class GeometryError(ValueError):
    pass


class CapacityError(RuntimeError):
    """Region cannot hold the requested number of points at the given spacing."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise GeometryError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not (-90.0 <= self.lat <= 90.0):
            raise GeometryError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise GeometryError(f"longitude {self.lon} outside [-180, 180]")


Ring = tuple[GeoPoint, ...]


def _ring_area2(ring: Ring) -> float:
    # twice the signed shoelace area in degree units
    total = 0.0
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        total += a.lon * b.lat - b.lon * a.lat
    return total


def _check_ring(ring: Sequence[GeoPoint], what: str) -> Ring:
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]  # accept explicitly closed rings
    if len(ring) < 3:
        raise GeometryError(f"{what} needs at least 3 distinct vertices")
    n = len(ring)
    for i in range(n):
        if ring[i] == ring[(i + 1) % n]:
            raise GeometryError(f"{what} has a zero-length edge at vertex {i}")
    return tuple(ring)


@dataclass(frozen=True)
class Polygon:
    exterior: Ring
    holes: tuple[Ring, ...] = ()

    def __init__(self, exterior: Sequence[GeoPoint], holes: Iterable[Sequence[GeoPoint]] = ()):
        object.__setattr__(self, "exterior", _check_ring(exterior, "exterior ring"))
        object.__setattr__(self, "holes", tuple(_check_ring(h, "hole ring") for h in holes))
        if _ring_area2(self.exterior) == 0.0:
            raise GeometryError("degenerate polygon: zero-area exterior")

    def bbox(self) -> tuple[float, float, float, float]:
        lats = [p.lat for p in self.exterior]
        lons = [p.lon for p in self.exterior]
        return min(lats), min(lons), max(lats), max(lons)


@dataclass(frozen=True)
class Region:
    """One or more polygons making up the study region."""

    polygons: tuple[Polygon, ...]

    def __post_init__(self) -> None:
        if not self.polygons:
            raise GeometryError("region has no polygons")

    def contains(self, p: GeoPoint) -> bool:
        return any(point_in_polygon(p, poly) for poly in self.polygons)

    def bbox(self) -> tuple[float, float, float, float]:
        boxes = [poly.bbox() for poly in self.polygons]
        return (
            min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes),
        )


class Status(str, Enum):
    RAW = "raw"
    RELOCATED = "relocated"
    EXCLUDED = "excluded"


class ExclusionReason(str, Enum):
    TOO_CLOSE = "too_close"
    NO_BUILDING_IN_RADIUS = "no_building_in_radius"
    NO_COVERAGE = "no_coverage"


@dataclass(frozen=True)
class SamplePoint:
    point_id: str
    location: GeoPoint
    status: Status = Status.RAW
    exclusion_reason: Optional[ExclusionReason] = None
    source_building_id: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.status == Status.EXCLUDED) != (self.exclusion_reason is not None):
            raise GeometryError("exclusion_reason present iff status is excluded")
        if (self.status == Status.RELOCATED) != (self.source_building_id is not None):
            raise GeometryError("source_building_id present iff status is relocated")


@dataclass(frozen=True)
class Footprint:
    building_id: str
    outline: Polygon
    centroid: GeoPoint

    @staticmethod
    def from_outline(building_id: str, outline: Polygon) -> "Footprint":
        return Footprint(building_id, outline, polygon_centroid(outline))


def _on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool:
    cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon)
    if cross != 0.0:
        return False
    return (min(a.lon, b.lon) <= p.lon <= max(a.lon, b.lon)
            and min(a.lat, b.lat) <= p.lat <= max(a.lat, b.lat))


def _ray_cast(p: GeoPoint, ring: Ring) -> bool:
    # even-odd rule, horizontal ray toward +lon
    inside = False
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if (a.lat <= p.lat) != (b.lat <= p.lat):
            x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon)
            if p.lon < x:
                inside = not inside
    return inside


def _on_ring_edge(p: GeoPoint, ring: Ring) -> bool:
    n = len(ring)
    return any(_on_segment(p, ring[i], ring[(i + 1) % n]) for i in range(n))


def point_in_polygon(p: GeoPoint, poly: Polygon) -> bool:
    """Planar even-odd containment; points on any edge count as inside."""
    if _on_ring_edge(p, poly.exterior) or any(_on_ring_edge(p, h) for h in poly.holes):
        return True
    if not _ray_cast(p, poly.exterior):
        return False
    return not any(_ray_cast(p, h) for h in poly.holes)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of mean earth radius."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def polygon_centroid(poly: Polygon) -> GeoPoint:
    """Area-weighted centroid of the exterior ring, planar in a local tangent frame."""
    ring = poly.exterior
    lat0 = sum(p.lat for p in ring) / len(ring)
    lon0 = sum(p.lon for p in ring) / len(ring)
    k = math.cos(math.radians(lat0))
    xy = [((p.lon - lon0) * k, p.lat - lat0) for p in ring]
    a2 = 0.0
    cx = cy = 0.0
    n = len(xy)
    for i in range(n):
        (x1, y1), (x2, y2) = xy[i], xy[(i + 1) % n]
        w = x1 * y2 - x2 * y1
        a2 += w
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    if abs(a2) < 1e-18:
        # fallback for needle-thin outlines
        return GeoPoint(lat0, lon0)
    cx /= 3.0 * a2
    cy /= 3.0 * a2
    return GeoPoint(lat0 + cy, lon0 + cx / k)


def _point_id(i: int, n: int) -> str:
    width = max(4, len(str(n)))
    return f"P{i:0{width}d}"


def random_points(region: Polygon | Region, n: int, seed: int,
                  min_spacing_m: float = MIN_SPACING_DEFAULT_M) -> list[SamplePoint]:
    """Rejection-sample n points inside the region, pairwise >= min_spacing_m apart.

    Deterministic for fixed (region, n, seed, min_spacing_m) on a given build.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if min_spacing_m < 0:
        raise ValueError("min_spacing_m must be >= 0")
    if isinstance(region, Polygon):
        region = Region((region,))
    rng = random.Random(seed)
    min_lat, min_lon, max_lat, max_lon = region.bbox()
    placed: list[GeoPoint] = []
    budget = ATTEMPTS_PER_POINT * n
    attempts = 0
    while len(placed) < n:
        if attempts >= budget:
            raise CapacityError(
                f"placed only {len(placed)} of {n} points after {budget} attempts; "
                f"region too small for {min_spacing_m} m spacing"
            )
        attempts += 1
        cand = GeoPoint(rng.uniform(min_lat, max_lat), rng.uniform(min_lon, max_lon))
        if not region.contains(cand):
            continue
        if min_spacing_m > 0 and any(haversine_m(cand, q) < min_spacing_m for q in placed):
            continue
        placed.append(cand)
    return [SamplePoint(_point_id(i + 1, n), p) for i, p in enumerate(placed)]


def relocate_to_nearest_footprint(p: SamplePoint, footprints: Sequence[Footprint],
                                  max_radius_m: float = MAX_RELOCATE_RADIUS_DEFAULT_M) -> SamplePoint:
    """Move a raw point to the nearest footprint centroid, or exclude it.

    Ties on distance go to the lexicographically smallest building_id.
    """
    if p.status != Status.RAW:
        raise ValueError(f"point {p.point_id} has status {p.status.value}, expected raw")
    best: Optional[Footprint] = None
    best_d = math.inf
    for fp in footprints:
        d = haversine_m(p.location, fp.centroid)
        if d < best_d or (d == best_d and best is not None and fp.building_id < best.building_id):
            best, best_d = fp, d
    if best is None or best_d > max_radius_m:
        return replace(p, status=Status.EXCLUDED,
                       exclusion_reason=ExclusionReason.NO_BUILDING_IN_RADIUS)
    return replace(p, location=best.centroid, status=Status.RELOCATED,
                   source_building_id=best.building_id)


# ---------------------------------------------------------------------------
# GeoJSON ingestion and sample-point CSV


def _ring_from_coords(coords: Sequence[Sequence[float]]) -> list[GeoPoint]:
    return [GeoPoint(lat=c[1], lon=c[0]) for c in coords]


def _polygon_from_coords(coords: Sequence) -> Polygon:
    if not coords:
        raise GeometryError("polygon has no rings")
    return Polygon(_ring_from_coords(coords[0]),
                   [_ring_from_coords(r) for r in coords[1:]])


def _geometry_to_polygons(geom: dict) -> list[Polygon]:
    gtype = geom.get("type")
    if gtype == "Polygon":
        return [_polygon_from_coords(geom["coordinates"])]
    if gtype == "MultiPolygon":
        return [_polygon_from_coords(c) for c in geom["coordinates"]]
    raise GeometryError(f"unsupported geometry type {gtype!r}")


def load_region_geojson(data: bytes | str) -> Region:
    """Region from a GeoJSON Polygon/MultiPolygon Feature (or bare geometry)."""
    obj = json.loads(data)
    if obj.get("type") == "FeatureCollection":
        feats = obj.get("features", [])
        if len(feats) != 1:
            raise GeometryError("region FeatureCollection must contain exactly one feature")
        obj = feats[0]
    if obj.get("type") == "Feature":
        obj = obj["geometry"]
    return Region(tuple(_geometry_to_polygons(obj)))


def load_footprints_geojson(data: bytes | str) -> list[Footprint]:
    """Footprints from a GeoJSON FeatureCollection with a building_id property."""
    obj = json.loads(data)
    if obj.get("type") != "FeatureCollection":
        raise GeometryError("footprints must be a GeoJSON FeatureCollection")
    footprints = []
    for feat in obj.get("features", []):
        props = feat.get("properties") or {}
        building_id = props.get("building_id")
        if not isinstance(building_id, str) or not building_id:
            raise GeometryError("footprint feature missing string 'building_id' property")
        polys = _geometry_to_polygons(feat["geometry"])
        if len(polys) != 1:
            raise GeometryError(f"footprint {building_id!r} must be a single Polygon")
        footprints.append(Footprint.from_outline(building_id, polys[0]))
    return footprints


POINTS_CSV_HEADER = ["point_id", "lat", "lon", "status", "exclusion_reason", "source_building_id"]


def points_to_csv(points: Iterable[SamplePoint]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POINTS_CSV_HEADER)
    for p in points:
        w.writerow([
            p.point_id,
            f"{p.location.lat:.6f}",
            f"{p.location.lon:.6f}",
            p.status.value,
            p.exclusion_reason.value if p.exclusion_reason else "",
            p.source_building_id or "",
        ])
    return buf.getvalue().encode("utf-8")


def points_from_csv(data: bytes | str) -> list[SamplePoint]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows or rows[0] != POINTS_CSV_HEADER:
        raise ValueError(f"bad points CSV header, expected {POINTS_CSV_HEADER}")
    points = []
    for row in rows[1:]:
        if len(row) != len(POINTS_CSV_HEADER):
            raise ValueError(f"bad points CSV row: {row!r}")
        pid, lat, lon, status, reason, src = row
        points.append(SamplePoint(
            point_id=pid,
            location=GeoPoint(float(lat), float(lon)),
            status=Status(status),
            exclusion_reason=ExclusionReason(reason) if reason else None,
            source_building_id=src or None,
        ))
    return points
