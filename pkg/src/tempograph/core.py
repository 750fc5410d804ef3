"""Domain types for sensor graphs, time buckets and the node-duration matrix.

A sensor is a fixed observation point (a road segment or a locality). Its
traffic state is recorded per time bucket: ``(day_index, minutes_of_day)``
with a configurable interval width, 5 minutes by default. Missing cells are
first-class: they are stored as NaN inside the dense array and surface as
``None`` through the accessors, never as 0 or -1.
"""

from __future__ import annotations

import datetime as _dt
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import UnknownSensorError, ValidationError

MINUTES_PER_DAY = 1440

SensorId = str


class Unit(str, enum.Enum):
    """What a matrix cell measures."""

    DURATION_SECONDS = "duration_seconds"
    SPEED_KMH = "speed_kmh"


@dataclass(frozen=True)
class TimeBucket:
    """One interval of one dataset day. Day 0 is the first collection day."""

    day_index: int
    minutes_of_day: int

    def __post_init__(self) -> None:
        if self.day_index < 0:
            raise ValidationError(f"day_index must be >= 0, got {self.day_index}")
        if not 0 <= self.minutes_of_day < MINUTES_PER_DAY:
            raise ValidationError(
                f"minutes_of_day must be in [0, {MINUTES_PER_DAY}), got {self.minutes_of_day}"
            )


def bucket_timestamp(
    ts: _dt.datetime | _dt.time,
    width_minutes: int,
    *,
    epoch: _dt.date | None = None,
) -> TimeBucket:
    """Floor a calendar timestamp to its interval boundary.

    ``epoch`` maps the calendar date to a dataset-relative day index; without
    it the bucket is day 0. Calendar handling stops here: everything
    downstream works on (day, minutes) pairs only.
    """
    _check_width(width_minutes)
    if isinstance(ts, _dt.datetime):
        minutes = ts.hour * 60 + ts.minute
        day = (ts.date() - epoch).days if epoch is not None else 0
        if day < 0:
            raise ValidationError(f"timestamp {ts} precedes epoch {epoch}")
    else:
        minutes = ts.hour * 60 + ts.minute
        day = 0
    return TimeBucket(day_index=day, minutes_of_day=minutes - minutes % width_minutes)


def bucket_from_interval_index(index: int, width_minutes: int) -> TimeBucket:
    """Map an absolute interval index (Q-Traffic style) to a (day, minutes) bucket."""
    _check_width(width_minutes)
    if index < 0:
        raise ValidationError(f"interval index must be >= 0, got {index}")
    per_day = MINUTES_PER_DAY // width_minutes
    return TimeBucket(day_index=index // per_day, minutes_of_day=(index % per_day) * width_minutes)


def _check_width(width_minutes: int) -> None:
    if width_minutes <= 0 or MINUTES_PER_DAY % width_minutes != 0:
        raise ValidationError(f"interval width must divide {MINUTES_PER_DAY}, got {width_minutes}")


@dataclass(frozen=True)
class SensorGraph:
    """Weighted sensor graph: ordered nodes, weighted edges, dense adjacency in [0, 1]."""

    nodes: tuple[SensorId, ...]
    edges: tuple[tuple[SensorId, SensorId, float], ...]
    adjacency: np.ndarray

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=np.float64)
        n = len(self.nodes)
        if adj.shape != (n, n):
            raise ValidationError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not np.all(np.isfinite(adj)):
            raise ValidationError("adjacency contains non-finite entries")
        if adj.size and (adj.min() < 0.0 or adj.max() > 1.0):
            raise ValidationError("adjacency entries must lie in [0, 1]")
        for frm, to, weight in self.edges:
            if weight < 0:
                raise ValidationError(f"edge ({frm!r}, {to!r}) has negative weight {weight}")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-node feature rows; row order follows the owning graph's node order."""

    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(self.feature_names):
            raise ValidationError(
                f"{values.shape[1]} feature columns vs {len(self.feature_names)} names"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DurationMatrix:
    """Sensor x (day, interval) table of travel durations (or speeds).

    ``values`` has shape (sensors, num_days, buckets_per_day); missing cells
    are NaN internally and ``None`` through :meth:`get` / :func:`slice_interval`.
    Instances are immutable; derive changed copies via :meth:`with_values`.
    """

    sensors: tuple[SensorId, ...]
    num_days: int
    values: np.ndarray = field(repr=False)
    interval_width_minutes: int = 5
    unit: Unit = Unit.DURATION_SECONDS

    def __post_init__(self) -> None:
        _check_width(self.interval_width_minutes)
        if self.num_days < 0:
            raise ValidationError(f"num_days must be >= 0, got {self.num_days}")
        values = np.asarray(self.values, dtype=np.float64)
        expected = (len(self.sensors), self.num_days, self.buckets_per_day)
        if values.shape != expected:
            raise ValidationError(f"values shape {values.shape}, expected {expected}")
        present = ~np.isnan(values)
        if np.any(values[present] < 0):
            raise ValidationError("present cells must be >= 0")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit", Unit(self.unit))
        index = {sid: i for i, sid in enumerate(self.sensors)}
        if len(index) != len(self.sensors):
            raise ValidationError("duplicate sensor ids in matrix")
        object.__setattr__(self, "_index", index)

    @property
    def buckets_per_day(self) -> int:
        return MINUTES_PER_DAY // self.interval_width_minutes

    @property
    def total_cells(self) -> int:
        return len(self.sensors) * self.num_days * self.buckets_per_day

    @property
    def present_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def sensor_index(self, sensor: SensorId) -> int:
        try:
            return self._index[sensor]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownSensorError(sensor, "not in matrix") from None

    def bucket_index(self, minutes_of_day: int) -> int:
        if (
            not 0 <= minutes_of_day < MINUTES_PER_DAY
            or minutes_of_day % self.interval_width_minutes != 0
        ):
            raise ValidationError(
                f"{minutes_of_day} is not a valid bucket for width {self.interval_width_minutes}"
            )
        return minutes_of_day // self.interval_width_minutes

    def get(self, sensor: SensorId, day_index: int, minutes_of_day: int) -> float | None:
        value = self.values[self.sensor_index(sensor), day_index, self.bucket_index(minutes_of_day)]
        return None if math.isnan(value) else float(value)

    def with_values(self, values: np.ndarray) -> "DurationMatrix":
        """Same axes and metadata, new cell contents."""
        return DurationMatrix(
            sensors=self.sensors,
            num_days=self.num_days,
            values=np.array(values, dtype=np.float64),
            interval_width_minutes=self.interval_width_minutes,
            unit=self.unit,
        )

    @staticmethod
    def empty(
        sensors: Sequence[SensorId],
        num_days: int,
        interval_width_minutes: int = 5,
        unit: Unit = Unit.DURATION_SECONDS,
    ) -> "DurationMatrix":
        shape = (len(sensors), num_days, MINUTES_PER_DAY // interval_width_minutes)
        return DurationMatrix(
            sensors=tuple(sensors),
            num_days=num_days,
            values=np.full(shape, np.nan),
            interval_width_minutes=interval_width_minutes,
            unit=unit,
        )

    @staticmethod
    def from_cells(
        sensors: Sequence[SensorId],
        num_days: int,
        cells: Mapping[tuple[SensorId, int, int], float] | Iterable[tuple[SensorId, int, int, float]],
        interval_width_minutes: int = 5,
        unit: Unit = Unit.DURATION_SECONDS,
    ) -> "DurationMatrix":
        """Build a matrix from (sensor, day, minutes_of_day) -> value entries."""
        base = DurationMatrix.empty(sensors, num_days, interval_width_minutes, unit)
        values = np.array(base.values)
        if isinstance(cells, Mapping):
            items = ((sid, day, minutes, value) for (sid, day, minutes), value in cells.items())
        else:
            items = iter(cells)
        for sid, day, minutes, value in items:
            values[base.sensor_index(sid), day, base.bucket_index(minutes)] = value
        return base.with_values(values)


def slice_interval(
    m: DurationMatrix, sensor: SensorId, minutes_of_day: int
) -> list[tuple[int, float | None]]:
    """All values recorded for one sensor at one time-of-day interval, day by day.

    Returns one entry per dataset day in chronological order; days without a
    record carry ``None``.
    """
    column = m.values[m.sensor_index(sensor), :, m.bucket_index(minutes_of_day)]
    return [(day, None if math.isnan(v) else float(v)) for day, v in enumerate(column)]


def completeness(m: DurationMatrix) -> float:
    """Fraction of grid cells that hold a value; 0.0 for an empty grid."""
    if m.total_cells == 0:
        return 0.0
    return float(m.present_mask.sum()) / m.total_cells
