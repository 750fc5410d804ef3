"""Two-stage gap filling for the duration matrix.

Stage one (day rule): a column is all the values one sensor recorded at one
time-of-day across days. Each missing day in a sufficiently supported column
is filled with the mean of a random sample of that column's observed values.
Stage two (interval rule): whatever is still missing is filled within its
sensor-day by linear progression between the nearest present neighbours in
time, copying one-sided at the edges of the day.

Sampling is driven by per-column PCG64 substreams derived from
``(seed, sensor_index, minutes_of_day)``, so serial and parallel runs (and
reruns) produce byte-identical matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import DurationMatrix
from .errors import SynthesisError, ValidationError

PROVENANCE_MISSING = 0
PROVENANCE_OBSERVED = 1
PROVENANCE_DAY_SYNTH = 2
PROVENANCE_INTERVAL_SYNTH = 3

PROVENANCE_NAMES: Mapping[int, str] = {
    PROVENANCE_MISSING: "missing",
    PROVENANCE_OBSERVED: "observed",
    PROVENANCE_DAY_SYNTH: "day_synth",
    PROVENANCE_INTERVAL_SYNTH: "interval_synth",
}


@dataclass(frozen=True)
class SynthConfig:
    rng_seed: int = 0
    sample_fraction: float = 0.5
    min_support: int = 3

    def __post_init__(self) -> None:
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValidationError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if self.min_support < 1:
            raise ValidationError(f"min_support must be >= 1, got {self.min_support}")


@dataclass(frozen=True)
class SynthReport:
    """Where every cell of the filled matrix came from."""

    filled_by_day_rule: int
    filled_by_interval_rule: int
    unresolved: int
    provenance: np.ndarray = field(repr=False)  # int8 codes, same shape as the matrix

    def __post_init__(self) -> None:
        provenance = np.asarray(self.provenance, dtype=np.int8)
        provenance.flags.writeable = False
        object.__setattr__(self, "provenance", provenance)
        counted = (
            self.observed
            + self.filled_by_day_rule
            + self.filled_by_interval_rule
            + self.unresolved
        )
        if counted != provenance.size:
            raise ValidationError(
                f"provenance accounts for {counted} cells of {provenance.size}"
            )

    @property
    def observed(self) -> int:
        return int((self.provenance == PROVENANCE_OBSERVED).sum())

    def counts(self) -> dict[str, int]:
        return {
            "observed": self.observed,
            "day_synth": self.filled_by_day_rule,
            "interval_synth": self.filled_by_interval_rule,
            "unresolved": self.unresolved,
            "total_cells": int(self.provenance.size),
        }


def _column_rng(seed: int, sensor_index: int, minutes_of_day: int) -> np.random.Generator:
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, sensor_index, minutes_of_day]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def synthesize_missing_days(
    m: DurationMatrix, cfg: SynthConfig
) -> tuple[DurationMatrix, SynthReport]:
    """Fill missing days column by column from each column's own history.

    A column needs at least ``cfg.min_support`` observed values; sparser
    columns are deferred to the interval rule. Each missing day gets the mean
    of ``ceil(sample_fraction * observed_count)`` values drawn uniformly
    without replacement from the column's observations.
    """
    values = np.array(m.values)
    provenance = np.where(m.present_mask, PROVENANCE_OBSERVED, PROVENANCE_MISSING).astype(np.int8)
    filled = 0
    num_sensors, num_days, buckets = values.shape
    width = m.interval_width_minutes
    for s in range(num_sensors):
        for b in range(buckets):
            column = values[s, :, b]
            observed = column[~np.isnan(column)]
            if observed.size < cfg.min_support or observed.size == num_days:
                continue
            rng = _column_rng(cfg.rng_seed, s, b * width)
            k = math.ceil(cfg.sample_fraction * observed.size)
            for day in np.flatnonzero(np.isnan(column)):
                sample = rng.choice(observed, size=k, replace=False)
                values[s, day, b] = float(sample.mean())
                provenance[s, day, b] = PROVENANCE_DAY_SYNTH
                filled += 1
    report = SynthReport(
        filled_by_day_rule=filled,
        filled_by_interval_rule=0,
        unresolved=int((provenance == PROVENANCE_MISSING).sum()),
        provenance=provenance,
    )
    return m.with_values(values), report


def synthesize_missing_intervals(
    m: DurationMatrix,
    cfg: SynthConfig,
    provenance: np.ndarray | None = None,
) -> tuple[DurationMatrix, SynthReport]:
    """Fill remaining gaps within each sensor-day by linear progression.

    Anchors are the cells present before this pass. A gap between two anchors
    is interpolated linearly in bucket index; a gap with one anchor copies it;
    a sensor-day with no anchors stays unresolved.
    """
    values = np.array(m.values)
    if provenance is None:
        provenance = np.where(m.present_mask, PROVENANCE_OBSERVED, PROVENANCE_MISSING)
    provenance = np.array(provenance, dtype=np.int8)
    day_fills = int((provenance == PROVENANCE_DAY_SYNTH).sum())
    filled = 0
    num_sensors, num_days, _ = values.shape
    for s in range(num_sensors):
        for d in range(num_days):
            row = values[s, d]
            present = np.flatnonzero(~np.isnan(row))
            missing = np.flatnonzero(np.isnan(row))
            if missing.size == 0 or present.size == 0:
                continue
            anchors = row[present]
            filled_row = np.interp(missing, present, anchors)  # flat beyond the edges
            row[missing] = filled_row
            provenance[s, d, missing] = PROVENANCE_INTERVAL_SYNTH
            filled += missing.size
    report = SynthReport(
        filled_by_day_rule=day_fills,
        filled_by_interval_rule=filled,
        unresolved=int((provenance == PROVENANCE_MISSING).sum()),
        provenance=provenance,
    )
    return m.with_values(values), report


def fill_all(m: DurationMatrix, cfg: SynthConfig) -> tuple[DurationMatrix, SynthReport]:
    """Day rule, then interval rule; fails if any cell remains empty.

    A forecasting matrix must be complete, so sensor-days with no observations
    anywhere (nothing to average, nothing to interpolate) raise a
    :class:`SynthesisError` naming the sensors.
    """
    after_days, day_report = synthesize_missing_days(m, cfg)
    complete, report = synthesize_missing_intervals(after_days, cfg, day_report.provenance)
    if report.unresolved:
        holes = np.all(report.provenance == PROVENANCE_MISSING, axis=2)
        bad = sorted({m.sensors[s] for s, _ in np.argwhere(holes)})
        raise SynthesisError(
            f"{report.unresolved} cells cannot be filled; sensors with empty days: {bad}",
            unresolved_sensors=bad,
        )
    return complete, report
