"""File loaders, the distance-kernel adjacency builder, and the dataset bundle.

On-disk formats (all UTF-8, portable across implementations):

* ``graph_sensor_ids.txt`` - one sensor id per line.
* ``distances_<name>.csv`` - header ``from,to,cost``; cost in meters.
* ``graph_sensor_locations.csv`` - header ``sensor_id,latitude,longitude``.
* duration matrix (long CSV) - header ``sensor_id,day_index,minutes_of_day,value``;
  absent cells are simply omitted rows.
* ``bundle.json`` manifest - names the files above plus interval width, day
  count, value unit and the RNG algorithm used for any synthesis.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import DurationMatrix, SensorGraph, SensorId, Unit
from .errors import DegenerateInputError, UnknownSensorError, ValidationError

log = logging.getLogger(__name__)

MANIFEST_NAME = "bundle.json"
RNG_ALGORITHM = "pcg64"  # numpy PCG64 streams, sub-seeded per column during synthesis


@dataclass(frozen=True)
class SensorRegistry:
    """Ordered, duplicate-free sensor ids; the order fixes matrix row order everywhere."""

    ids: tuple[SensorId, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for sid in self.ids:
            if not sid:
                raise ValidationError("sensor ids must be non-empty")
            if sid in seen:
                raise ValidationError(f"duplicate sensor id {sid!r}")
            seen.add(sid)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, sid: object) -> bool:
        return sid in self.ids

    def index(self, sid: SensorId) -> int:
        try:
            return self.ids.index(sid)
        except ValueError:
            raise UnknownSensorError(sid, "not in registry") from None


@dataclass(frozen=True)
class DistanceTable:
    """Pairwise road distances in meters, endpoints validated against a registry."""

    entries: tuple[tuple[SensorId, SensorId, float], ...]

    def distances(self) -> np.ndarray:
        return np.array([d for _, _, d in self.entries], dtype=np.float64)


@dataclass(frozen=True)
class SensorLocation:
    id: SensorId
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} out of range for {self.id!r}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} out of range for {self.id!r}")


@dataclass(frozen=True)
class DatasetBundle:
    """Registry + graph + matrix (+ optional locations) indexed consistently."""

    registry: SensorRegistry
    graph: SensorGraph
    matrix: DurationMatrix
    name: str
    locations: tuple[SensorLocation, ...] | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def with_matrix(self, matrix: DurationMatrix) -> "DatasetBundle":
        return replace(self, matrix=matrix)


def load_sensor_ids(path: str | Path) -> SensorRegistry:
    """Read one sensor id per line, preserving file order; blank lines are skipped."""
    path = Path(path)
    ids: list[str] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            sid = raw.strip()
            if not sid:
                continue
            if sid in seen:
                raise ValidationError(
                    f"{path}: duplicate sensor id {sid!r} on line {lineno} "
                    f"(first seen on line {seen[sid]})"
                )
            seen[sid] = lineno
            ids.append(sid)
    if not ids:
        raise ValidationError(f"{path}: no sensor ids found")
    return SensorRegistry(ids=tuple(ids))


def load_distances(path: str | Path, registry: SensorRegistry) -> DistanceTable:
    """Read a ``from,to,cost`` CSV; costs are meters and must be positive."""
    path = Path(path)
    entries: list[tuple[str, str, float]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["from", "to", "cost"]:
            raise ValidationError(f"{path}: expected header 'from,to,cost', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            frm, to, cost_raw = row[0].strip(), row[1].strip(), row[2].strip()
            for endpoint in (frm, to):
                if endpoint not in registry:
                    raise UnknownSensorError(endpoint, f"{path}:{lineno}")
            try:
                cost = float(cost_raw)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: cost {cost_raw!r} is not a number") from None
            if frm == to:
                if cost < 0:
                    raise ValidationError(f"{path}:{lineno}: negative self-distance {cost}")
            elif cost <= 0:
                raise ValidationError(f"{path}:{lineno}: cost must be positive, got {cost}")
            entries.append((frm, to, cost))
    return DistanceTable(entries=tuple(entries))


def load_locations(path: str | Path, registry: SensorRegistry | None = None) -> tuple[SensorLocation, ...]:
    """Read a ``sensor_id,latitude,longitude`` CSV."""
    path = Path(path)
    out: list[SensorLocation] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["sensor_id", "latitude", "longitude"]:
            raise ValidationError(
                f"{path}: expected header 'sensor_id,latitude,longitude', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            sid = row[0].strip()
            if registry is not None and sid not in registry:
                raise UnknownSensorError(sid, f"{path}:{lineno}")
            try:
                lat, lon = float(row[1]), float(row[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad coordinates {row[1:]!r}") from None
            out.append(SensorLocation(id=sid, latitude=lat, longitude=lon))
    return tuple(out)


def build_adjacency(
    distances: DistanceTable,
    registry: SensorRegistry,
    kappa: float = 0.1,
) -> SensorGraph:
    """Turn pairwise distances into a thresholded Gaussian-kernel adjacency.

    ``W[i, j] = exp(-d(i, j)^2 / sigma^2)`` with sigma the standard deviation
    of all listed distances; entries below ``kappa`` are zeroed, the diagonal
    is forced to 1 and unlisted pairs stay 0. When all distances coincide
    (sigma = 0) the mean distance substitutes for sigma.
    """
    if not distances.entries:
        raise ValidationError("distance table is empty")
    if not 0.0 <= kappa <= 1.0:
        raise ValidationError(f"kappa must be in [0, 1], got {kappa}")
    d = distances.distances()
    sigma = float(d.std())
    if sigma == 0.0:
        sigma = float(d.mean())
        if sigma == 0.0:
            raise DegenerateInputError("all distances are zero; kernel width undefined")
    n = len(registry)
    adjacency = np.zeros((n, n), dtype=np.float64)
    for frm, to, dist in distances.entries:
        adjacency[registry.index(frm), registry.index(to)] = math.exp(-((dist / sigma) ** 2))
    adjacency[adjacency < kappa] = 0.0
    np.fill_diagonal(adjacency, 1.0)
    edges = tuple(
        (frm, to, adjacency[registry.index(frm), registry.index(to)])
        for frm, to, _ in distances.entries
        if frm != to and adjacency[registry.index(frm), registry.index(to)] > 0.0
    )
    return SensorGraph(nodes=registry.ids, edges=edges, adjacency=adjacency)


def load_duration_matrix(
    path: str | Path,
    registry: SensorRegistry,
    interval_width_minutes: int = 5,
    num_days: int | None = None,
    unit: Unit = Unit.DURATION_SECONDS,
) -> DurationMatrix:
    """Read the long-format matrix CSV; unlisted cells stay explicitly absent.

    A repeated (sensor, day, minutes) cell keeps the later row's value and
    logs a warning - crowd-sourced exports routinely contain re-uploads.
    """
    path = Path(path)
    rows: list[tuple[int, int, int, float]] = []
    max_day = -1
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["sensor_id", "day_index", "minutes_of_day", "value"]
        if header is None or [h.strip() for h in header] != expected:
            raise ValidationError(f"{path}: expected header {','.join(expected)!r}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            sid = row[0].strip()
            if sid not in registry:
                raise UnknownSensorError(sid, f"{path}:{lineno}")
            try:
                day = int(row[1])
                minutes = int(row[2])
                value = float(row[3])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad row {row!r}") from None
            if day < 0:
                raise ValidationError(f"{path}:{lineno}: day_index must be >= 0, got {day}")
            if value < 0:
                raise ValidationError(f"{path}:{lineno}: value must be >= 0, got {value}")
            if minutes % interval_width_minutes != 0 or not 0 <= minutes < 1440:
                raise ValidationError(
                    f"{path}:{lineno}: minutes_of_day {minutes} invalid for "
                    f"width {interval_width_minutes}"
                )
            max_day = max(max_day, day)
            rows.append((registry.index(sid), day, minutes // interval_width_minutes, value))
    if num_days is None:
        num_days = max_day + 1 if max_day >= 0 else 0
    shape = (len(registry), num_days, 1440 // interval_width_minutes)
    values = np.full(shape, np.nan)
    for sensor_idx, day, bucket, value in rows:
        if day >= num_days:
            raise ValidationError(f"{path}: day_index {day} outside declared num_days {num_days}")
        if not math.isnan(values[sensor_idx, day, bucket]):
            log.warning(
                "%s: duplicate cell (%s, day %d, bucket %d); keeping the later value",
                path,
                registry.ids[sensor_idx],
                day,
                bucket,
            )
        values[sensor_idx, day, bucket] = value
    return DurationMatrix(
        sensors=registry.ids,
        num_days=num_days,
        values=values,
        interval_width_minutes=interval_width_minutes,
        unit=unit,
    )


def save_duration_matrix(m: DurationMatrix, path: str | Path) -> None:
    """Write the long CSV. Values use repr floats, so load(save(m)) is bit-exact."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sensor_id", "day_index", "minutes_of_day", "value"])
        width = m.interval_width_minutes
        for s, sid in enumerate(m.sensors):
            for day in range(m.num_days):
                row = m.values[s, day]
                for bucket in np.flatnonzero(~np.isnan(row)):
                    writer.writerow([sid, day, int(bucket) * width, repr(float(row[bucket]))])


def validate_bundle(bundle: DatasetBundle) -> list[str]:
    """Cross-check registry/graph/matrix consistency; returns human-readable findings."""
    findings: list[str] = []
    n = len(bundle.registry)
    if bundle.graph.nodes != bundle.registry.ids:
        findings.append(
            f"graph nodes ({len(bundle.graph.nodes)}) do not match registry order ({n} ids)"
        )
    if bundle.graph.adjacency.shape != (n, n):
        findings.append(
            f"adjacency shape {bundle.graph.adjacency.shape} does not match {n} sensors"
        )
    else:
        adj = bundle.graph.adjacency
        if adj.size and (adj.min() < 0.0 or adj.max() > 1.0):
            findings.append("adjacency entries outside [0, 1]")
        elif adj.size and not np.all(np.diag(adj) == 1.0):
            findings.append("adjacency diagonal is not all 1")
    if bundle.matrix.sensors != bundle.registry.ids:
        findings.append(
            f"matrix rows ({len(bundle.matrix.sensors)}) do not match registry order ({n} ids)"
        )
    present = bundle.matrix.values[bundle.matrix.present_mask]
    if present.size and present.min() < 0:
        findings.append("matrix contains negative cells")
    if bundle.locations:
        located = {loc.id for loc in bundle.locations}
        missing = [sid for sid in bundle.registry.ids if sid not in located]
        if missing:
            findings.append(f"{len(missing)} sensors lack locations: {missing[:5]}")
    return findings


def save_bundle(bundle: DatasetBundle, out_dir: str | Path) -> Path:
    """Write the bundle directory: manifest plus the four data files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph_sensor_ids.txt").write_text(
        "".join(f"{sid}\n" for sid in bundle.registry.ids), encoding="utf-8"
    )
    files = {
        "sensor_ids": "graph_sensor_ids.txt",
        "duration_matrix": "duration_matrix.csv",
    }
    save_duration_matrix(bundle.matrix, out / "duration_matrix.csv")
    distances = bundle.extra.get("distance_entries")
    if distances:
        files["distances"] = f"distances_{bundle.name}.csv"
        with (out / files["distances"]).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["from", "to", "cost"])
            for frm, to, cost in distances:
                writer.writerow([frm, to, repr(float(cost))])
    if bundle.locations:
        files["locations"] = "graph_sensor_locations.csv"
        with (out / files["locations"]).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sensor_id", "latitude", "longitude"])
            for loc in bundle.locations:
                writer.writerow([loc.id, repr(loc.latitude), repr(loc.longitude)])
    manifest = {
        "name": bundle.name,
        "interval_width_minutes": bundle.matrix.interval_width_minutes,
        "num_days": bundle.matrix.num_days,
        "unit": bundle.matrix.unit.value,
        "rng_algorithm": RNG_ALGORITHM,
        "kappa": bundle.extra.get("kappa", 0.1),
        "files": files,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out / MANIFEST_NAME


def load_bundle(bundle_dir: str | Path) -> DatasetBundle:
    """Read a bundle directory written by :func:`save_bundle`."""
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValidationError(f"{bundle_dir}: no {MANIFEST_NAME} manifest found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    files = manifest["files"]
    registry = load_sensor_ids(bundle_dir / files["sensor_ids"])
    matrix = load_duration_matrix(
        bundle_dir / files["duration_matrix"],
        registry,
        interval_width_minutes=int(manifest["interval_width_minutes"]),
        num_days=int(manifest["num_days"]),
        unit=Unit(manifest["unit"]),
    )
    extra: dict = {"kappa": manifest.get("kappa", 0.1)}
    if "distances" in files:
        table = load_distances(bundle_dir / files["distances"], registry)
        graph = build_adjacency(table, registry, kappa=float(extra["kappa"]))
        extra["distance_entries"] = table.entries
    else:
        # no distance information: self-loop-only graph
        graph = SensorGraph(
            nodes=registry.ids, edges=(), adjacency=np.eye(len(registry), dtype=np.float64)
        )
    locations = None
    if "locations" in files:
        locations = load_locations(bundle_dir / files["locations"], registry)
    return DatasetBundle(
        registry=registry,
        graph=graph,
        matrix=matrix,
        locations=locations,
        name=str(manifest["name"]),
        extra=extra,
    )
