"""Raw GPS trip logs to a duration matrix.

Stages: cluster activity centers (DBSCAN under haversine distance), complete
gaps in each trip's road list through a pluggable road-network provider,
split the trip's time span into per-road checkpoints proportionally to road
length, then bucket and average checkpoint durations into the matrix.

Trips arrive as JSON lines; a ``null`` entry in a trip's road list marks a
known gap for the provider to fill.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .core import DurationMatrix, SensorId, Unit, bucket_timestamp
from .errors import (
    DegenerateInputError,
    ProviderError,
    UnknownSensorError,
    ValidationError,
)
from .ingest import SensorRegistry

EARTH_RADIUS_METERS = 6_371_000.0

LatLon = tuple[float, float]


@dataclass(frozen=True)
class RawTripPoint:
    latitude: float
    longitude: float
    ts: _dt.datetime
    accuracy_meters: float | None = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} out of range")
        if self.accuracy_meters is not None and self.accuracy_meters < 0:
            raise ValidationError("accuracy_meters must be >= 0")


@dataclass(frozen=True)
class RoadSegment:
    road_id: SensorId
    length_meters: float
    locality: str = ""
    inferred: bool = False

    def __post_init__(self) -> None:
        if self.length_meters <= 0:
            raise ValidationError(f"road {self.road_id!r} has non-positive length")


@dataclass(frozen=True)
class Trip:
    """One journey: time-ordered points plus an ordered, possibly gappy road list."""

    trip_id: str
    start_ts: _dt.datetime
    end_ts: _dt.datetime
    points: tuple[RawTripPoint, ...] = ()
    roads: tuple[RoadSegment | None, ...] = ()

    def __post_init__(self) -> None:
        if self.end_ts <= self.start_ts:
            raise ValidationError(f"trip {self.trip_id!r}: end_ts must follow start_ts")
        stamps = [p.ts for p in self.points]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValidationError(f"trip {self.trip_id!r}: points must be strictly time-ordered")

    @property
    def duration_seconds(self) -> float:
        return (self.end_ts - self.start_ts).total_seconds()

    def is_gap_free(self) -> bool:
        return all(r is not None for r in self.roads)


@dataclass(frozen=True)
class Checkpoint:
    """Per-road slice of a trip; exit of one checkpoint is the enter of the next."""

    road_id: SensorId
    enter_ts: _dt.datetime
    exit_ts: _dt.datetime

    def __post_init__(self) -> None:
        if self.exit_ts <= self.enter_ts:
            raise ValidationError(f"checkpoint {self.road_id!r}: exit must follow enter")

    @property
    def duration_seconds(self) -> float:
        return (self.exit_ts - self.enter_ts).total_seconds()


@dataclass(frozen=True)
class Cluster:
    member_indices: tuple[int, ...]
    centroid: LatLon
    label: str = "other"  # home | work | other | noise

    @property
    def size(self) -> int:
        return len(self.member_indices)


def haversine_meters(a: LatLon, b: LatLon) -> float:
    """Great-circle distance on a 6,371 km sphere."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_METERS * math.asin(min(1.0, math.sqrt(h)))


def dbscan_cluster(
    points: Sequence[LatLon],
    eps_meters: float = 500.0,
    min_pts: int = 4,
) -> list[Cluster]:
    """Classic DBSCAN over haversine distance; the 500 m default radius marks activity areas.

    Deterministic: points are scanned in input order and clusters expand their
    frontier first-in-first-out, so a given input always yields the same
    clusters in the same order. A point is core when its eps-ball (itself
    included) holds at least ``min_pts`` points. Unclustered points are
    returned as one final cluster labelled ``noise``.
    """
    if eps_meters <= 0:
        raise ValidationError("eps_meters must be positive")
    if min_pts < 1:
        raise ValidationError("min_pts must be >= 1")
    n = len(points)
    if n == 0:
        return []

    def neighbors(i: int) -> list[int]:
        return [j for j in range(n) if haversine_meters(points[i], points[j]) <= eps_meters]

    UNSEEN, NOISE = 0, -1
    labels = [UNSEEN] * n
    clusters: list[list[int]] = []
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        seed = neighbors(i)
        if len(seed) < min_pts:
            labels[i] = NOISE
            continue
        cluster_id = len(clusters) + 1
        labels[i] = cluster_id
        members = [i]
        queue = [j for j in seed if j != i]
        k = 0
        while k < len(queue):
            j = queue[k]
            k += 1
            if labels[j] == NOISE:
                labels[j] = cluster_id  # border point reclaimed from noise
                members.append(j)
                continue
            if labels[j] != UNSEEN:
                continue
            labels[j] = cluster_id
            members.append(j)
            expansion = neighbors(j)
            if len(expansion) >= min_pts:
                queue.extend(m for m in expansion if labels[m] in (UNSEEN, NOISE))
        clusters.append(sorted(members))

    out = [
        Cluster(member_indices=tuple(members), centroid=_centroid(points, members))
        for members in clusters
    ]
    noise = [i for i in range(n) if labels[i] == NOISE]
    if noise:
        out.append(
            Cluster(member_indices=tuple(noise), centroid=_centroid(points, noise), label="noise")
        )
    return out


def _centroid(points: Sequence[LatLon], members: Sequence[int]) -> LatLon:
    lat = sum(points[i][0] for i in members) / len(members)
    lon = sum(points[i][1] for i in members) / len(members)
    return (lat, lon)


def label_activity_centers(clusters: Sequence[Cluster]) -> list[Cluster]:
    """Tag the two most active clusters home and work.

    The largest cluster becomes home, the runner-up work; size ties fall back
    to lower centroid latitude, then longitude. Noise stays noise.
    """
    ranked = sorted(
        (c for c in clusters if c.label != "noise"),
        key=lambda c: (-c.size, c.centroid[0], c.centroid[1]),
    )
    relabel: dict[int, str] = {}
    if ranked:
        relabel[id(ranked[0])] = "home"
    if len(ranked) > 1:
        relabel[id(ranked[1])] = "work"
    out = []
    for c in clusters:
        if c.label == "noise":
            out.append(c)
        else:
            out.append(replace(c, label=relabel.get(id(c), "other")))
    return out


class RoadNetworkProvider(Protocol):
    """Answers route queries between two known road ids."""

    def route(self, from_id: SensorId, to_id: SensorId) -> list[RoadSegment]:
        """Full path from ``from_id`` to ``to_id``, both endpoints included."""
        ...


class FixtureRoadProvider:
    """Offline provider backed by a static route table; used by tests and CI."""

    def __init__(self, routes: Mapping[tuple[SensorId, SensorId], Sequence[RoadSegment]]):
        self._routes = {pair: tuple(path) for pair, path in routes.items()}

    @classmethod
    def from_json(cls, path: str | Path) -> "FixtureRoadProvider":
        """Route table JSON: {"routes": [{"from", "to", "path": [{road_id, length_m, locality}]}]}."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        routes = {}
        for entry in data["routes"]:
            path_segments = tuple(
                RoadSegment(
                    road_id=seg["road_id"],
                    length_meters=float(seg["length_m"]),
                    locality=seg.get("locality", ""),
                )
                for seg in entry["path"]
            )
            routes[(entry["from"], entry["to"])] = path_segments
        return cls(routes)

    def route(self, from_id: SensorId, to_id: SensorId) -> list[RoadSegment]:
        try:
            return list(self._routes[(from_id, to_id)])
        except KeyError:
            raise ProviderError(from_id, to_id, "not in fixture table") from None


class HttpRoadProvider:
    """Minimal HTTP route client: GET <base>/route?from=..&to=.. -> JSON segment list."""

    def __init__(self, base_url: str, timeout_seconds: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_seconds = timeout_seconds

    def route(self, from_id: SensorId, to_id: SensorId) -> list[RoadSegment]:
        query = urllib.parse.urlencode({"from": from_id, "to": to_id})
        url = f"{self.base_url}/route?{query}"
        try:
            with urllib.request.urlopen(url, timeout=self.timeout_seconds) as resp:
                if resp.status != 200:
                    raise ProviderError(from_id, to_id, f"HTTP {resp.status}")
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise ProviderError(from_id, to_id, f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise ProviderError(from_id, to_id, str(exc)) from exc
        return [
            RoadSegment(
                road_id=seg["road_id"],
                length_meters=float(seg["length_m"]),
                locality=seg.get("locality", ""),
            )
            for seg in payload
        ]


def complete_roads(trip: Trip, provider: RoadNetworkProvider) -> Trip:
    """Fill every gap in the trip's road list via the provider.

    Returned segments between two anchors are flagged ``inferred``. A gap at
    the start or end of the list has no anchor pair and is rejected.
    """
    if trip.is_gap_free():
        return trip
    roads = list(trip.roads)
    if not roads or roads[0] is None or roads[-1] is None:
        raise ValidationError(f"trip {trip.trip_id!r}: gap at trip boundary cannot be completed")
    completed: list[RoadSegment] = []
    i = 0
    while i < len(roads):
        segment = roads[i]
        if segment is not None:
            completed.append(segment)
            i += 1
            continue
        prev = completed[-1]
        j = i
        while roads[j] is None:
            j += 1
        nxt = roads[j]
        path = provider.route(prev.road_id, nxt.road_id)
        if (
            len(path) < 2
            or path[0].road_id != prev.road_id
            or path[-1].road_id != nxt.road_id
        ):
            raise ProviderError(
                prev.road_id, nxt.road_id, "provider path does not join the anchors"
            )
        completed.extend(replace(seg, inferred=True) for seg in path[1:-1])
        i = j
    return replace(trip, roads=tuple(completed))


def generate_checkpoints(trip: Trip) -> list[Checkpoint]:
    """Split the trip's time span across its roads proportionally to length.

    Checkpoints are contiguous and their durations sum to the trip duration
    exactly; the last checkpoint absorbs any rounding.
    """
    if not trip.is_gap_free():
        raise ValidationError(f"trip {trip.trip_id!r}: complete the road list first")
    segments = [r for r in trip.roads if r is not None]
    if not segments:
        raise DegenerateInputError(f"trip {trip.trip_id!r} has no roads")
    total_length = sum(seg.length_meters for seg in segments)
    if total_length <= 0:
        raise DegenerateInputError(f"trip {trip.trip_id!r} has zero total road length")
    total_seconds = trip.duration_seconds
    boundaries = [trip.start_ts]
    cumulative = 0.0
    for seg in segments[:-1]:
        cumulative += seg.length_meters
        offset = total_seconds * (cumulative / total_length)
        boundaries.append(trip.start_ts + _dt.timedelta(seconds=offset))
    boundaries.append(trip.end_ts)
    checkpoints = [
        Checkpoint(road_id=seg.road_id, enter_ts=enter, exit_ts=exit_)
        for seg, enter, exit_ in zip(segments, boundaries, boundaries[1:])
    ]
    return checkpoints


def compile_dataset(
    trips: Sequence[Trip],
    registry: SensorRegistry,
    width_minutes: int = 5,
    epoch: _dt.date | None = None,
    workers: int = 1,
) -> DurationMatrix:
    """Bucket all trips' checkpoints into one duration matrix.

    Each checkpoint contributes its duration to the cell of its road at the
    bucket of its enter time; multiple contributions to a cell are averaged.
    Trips may be processed concurrently; the merge always runs in sensor,
    day, bucket order so results do not depend on scheduling.
    """
    if epoch is None:
        dates = [t.start_ts.date() for t in trips]
        epoch = min(dates) if dates else _dt.date(1970, 1, 1)

    def contributions(trip: Trip) -> list[tuple[int, int, int, float]]:
        out = []
        for cp in generate_checkpoints(trip):
            if cp.road_id not in registry:
                raise UnknownSensorError(cp.road_id, f"trip {trip.trip_id!r}")
            bucket = bucket_timestamp(cp.enter_ts, width_minutes, epoch=epoch)
            out.append(
                (
                    registry.index(cp.road_id),
                    bucket.day_index,
                    bucket.minutes_of_day // width_minutes,
                    cp.duration_seconds,
                )
            )
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trip = list(pool.map(contributions, trips))
    else:
        per_trip = [contributions(t) for t in trips]

    by_cell: dict[tuple[int, int, int], list[float]] = {}
    for trip_contribs in per_trip:
        for sensor_idx, day, bucket, duration in trip_contribs:
            by_cell.setdefault((sensor_idx, day, bucket), []).append(duration)

    num_days = 1 + max((day for _, day, _ in by_cell), default=-1)
    values = np.full((len(registry), max(num_days, 0), 1440 // width_minutes), np.nan)
    for key in sorted(by_cell):
        sensor_idx, day, bucket = key
        samples = by_cell[key]
        values[sensor_idx, day, bucket] = sum(samples) / len(samples)
    return DurationMatrix(
        sensors=registry.ids,
        num_days=max(num_days, 0),
        values=values,
        interval_width_minutes=width_minutes,
        unit=Unit.DURATION_SECONDS,
    )


def locality_coverage(
    m: DurationMatrix, locality_of: Mapping[SensorId, str]
) -> list[tuple[str, int, float]]:
    """Present-cell counts per locality with percentage of the whole dataset.

    Rows are sorted by record count descending (then name); percentages are
    rounded to two decimals. An empty matrix yields an empty table.
    """
    for sid in m.sensors:
        if sid not in locality_of:
            raise ValidationError(f"sensor {sid!r} has no locality mapping")
    counts: dict[str, int] = {}
    per_sensor = m.present_mask.sum(axis=(1, 2))
    for sid, count in zip(m.sensors, per_sensor):
        if count:
            counts[locality_of[sid]] = counts.get(locality_of[sid], 0) + int(count)
    total = sum(counts.values())
    if total == 0:
        return []
    return [
        (locality, records, round(records / total * 100.0, 2))
        for locality, records in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]


def load_trips(path: str | Path) -> list[Trip]:
    """Parse the JSON-lines trip log; ``null`` road entries mark known gaps."""
    path = Path(path)
    trips: list[Trip] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                points = tuple(
                    RawTripPoint(
                        latitude=float(p["lat"]),
                        longitude=float(p["lon"]),
                        ts=_dt.datetime.fromisoformat(p["ts"]),
                        accuracy_meters=p.get("accuracy_m"),
                    )
                    for p in obj.get("points", ())
                )
                roads = tuple(
                    None
                    if r is None
                    else RoadSegment(
                        road_id=r["road_id"],
                        length_meters=float(r["length_m"]),
                        locality=r.get("locality", ""),
                    )
                    for r in obj.get("roads", ())
                )
                trips.append(
                    Trip(
                        trip_id=str(obj["trip_id"]),
                        start_ts=_dt.datetime.fromisoformat(obj["start_ts"]),
                        end_ts=_dt.datetime.fromisoformat(obj["end_ts"]),
                        points=points,
                        roads=roads,
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed trip record: {exc}") from None
    return trips


def save_trips(trips: Sequence[Trip], path: str | Path) -> None:
    """Inverse of :func:`load_trips`."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for trip in trips:
            record = {
                "trip_id": trip.trip_id,
                "start_ts": trip.start_ts.isoformat(),
                "end_ts": trip.end_ts.isoformat(),
                "points": [
                    {
                        "lat": p.latitude,
                        "lon": p.longitude,
                        "ts": p.ts.isoformat(),
                        **({"accuracy_m": p.accuracy_meters} if p.accuracy_meters is not None else {}),
                    }
                    for p in trip.points
                ],
                "roads": [
                    None
                    if r is None
                    else {"road_id": r.road_id, "length_m": r.length_meters, "locality": r.locality}
                    for r in trip.roads
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
