"""Seeded desk-scale benchmark dataset: diffusion-coupled sinusoids on a ring.

Each day gets fresh random phases, so a per-interval historical average
cannot track the signal, while any model that reads the recent window can.
Used by the training acceptance gates, the demos and the end-to-end CLI run.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import DurationMatrix, Unit
from .ingest import (
    DatasetBundle,
    DistanceTable,
    SensorRegistry,
    build_adjacency,
    save_bundle,
)
from .models.graph import random_walk_matrices


def toy_matrix(
    num_nodes: int = 4,
    num_days: int = 7,
    interval_width_minutes: int = 5,
    seed: int = 202,
    missing_fraction: float = 0.0,
) -> DurationMatrix:
    """Per-day random-phase sinusoids, diffused across the ring graph."""
    rng = np.random.default_rng(seed)
    buckets = 1440 // interval_width_minutes
    t = np.arange(buckets) / buckets
    adjacency = ring_distances_adjacency(num_nodes)
    forward, _ = random_walk_matrices(adjacency)
    smoothing = 0.5 * np.eye(num_nodes) + 0.5 * forward
    values = np.empty((num_nodes, num_days, buckets))
    for d in range(num_days):
        phase = rng.uniform(0.0, 1.0, size=num_nodes)
        phase_fast = rng.uniform(0.0, 1.0, size=num_nodes)
        base = np.sin(2 * np.pi * (3.0 * t[None, :] + phase[:, None]))
        fast = 0.4 * np.sin(2 * np.pi * (9.0 * t[None, :] + phase_fast[:, None]))
        signal = smoothing @ (smoothing @ (base + fast))
        values[:, d, :] = 120.0 + 45.0 * signal + rng.normal(0.0, 1.5, size=(num_nodes, buckets))
    values = np.maximum(values, 1.0)
    if missing_fraction > 0.0:
        holes = rng.random(values.shape) < missing_fraction
        values[holes] = np.nan
    return DurationMatrix(
        sensors=tuple(f"road-{i}" for i in range(num_nodes)),
        num_days=num_days,
        values=values,
        interval_width_minutes=interval_width_minutes,
        unit=Unit.DURATION_SECONDS,
    )


def ring_distance_entries(num_nodes: int = 4) -> list[tuple[str, str, float]]:
    # spread the link lengths widely: the kernel width is the distance std,
    # so near-equal distances would threshold every edge away
    entries = []
    for i in range(num_nodes):
        j = (i + 1) % num_nodes
        distance = 250.0 + 450.0 * i
        entries.append((f"road-{i}", f"road-{j}", distance))
        entries.append((f"road-{j}", f"road-{i}", distance))
    return entries


def ring_distances_adjacency(num_nodes: int = 4) -> np.ndarray:
    registry = SensorRegistry(tuple(f"road-{i}" for i in range(num_nodes)))
    table = DistanceTable(entries=tuple(ring_distance_entries(num_nodes)))
    return build_adjacency(table, registry).adjacency


def toy_bundle(
    num_nodes: int = 4,
    num_days: int = 7,
    interval_width_minutes: int = 5,
    seed: int = 202,
    missing_fraction: float = 0.0,
    name: str = "toy-ring",
) -> DatasetBundle:
    matrix = toy_matrix(num_nodes, num_days, interval_width_minutes, seed, missing_fraction)
    registry = SensorRegistry(matrix.sensors)
    table = DistanceTable(entries=tuple(ring_distance_entries(num_nodes)))
    graph = build_adjacency(table, registry)
    return DatasetBundle(
        registry=registry,
        graph=graph,
        matrix=matrix,
        name=name,
        extra={"distance_entries": table.entries, "kappa": 0.1},
    )


def write_toy_bundle(out_dir: str | Path, **kwargs) -> Path:
    """Materialize the toy bundle on disk for the CLI chain; returns the manifest path."""
    return save_bundle(toy_bundle(**kwargs), out_dir)
