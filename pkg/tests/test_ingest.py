import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempograph import DurationMatrix, SensorGraph, Unit, ValidationError
from tempograph.errors import DegenerateInputError, UnknownSensorError
from tempograph.ingest import (
    DatasetBundle,
    DistanceTable,
    SensorRegistry,
    build_adjacency,
    load_bundle,
    load_distances,
    load_duration_matrix,
    load_locations,
    load_sensor_ids,
    save_bundle,
    save_duration_matrix,
    validate_bundle,
)

LOCALITIES = ["Lucija", "Marsa", "Mosta", "Attard", "Msida", "Furjana"]


class TestLoadSensorIds:
    def test_preserves_file_order(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("A\nB\nC\n", encoding="utf-8")
        assert load_sensor_ids(p).ids == ("A", "B", "C")

    def test_duplicate_id_named(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("A\nA\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="'A'.*line 2"):
            load_sensor_ids(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("", encoding="utf-8")
        with pytest.raises(ValidationError, match="no sensor ids"):
            load_sensor_ids(p)

    def test_six_locality_fixture(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("".join(f"{s}\n" for s in LOCALITIES), encoding="utf-8")
        assert load_sensor_ids(p).ids == tuple(LOCALITIES)

    def test_whitespace_trimmed(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("  A \nB\t\n", encoding="utf-8")
        assert load_sensor_ids(p).ids == ("A", "B")


class TestLoadDistances:
    def test_single_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("from,to,cost\nA,B,1000\n", encoding="utf-8")
        table = load_distances(p, SensorRegistry(("A", "B")))
        assert table.entries == (("A", "B", 1000.0),)

    def test_unknown_endpoint(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("from,to,cost\nA,Z,500\n", encoding="utf-8")
        with pytest.raises(UnknownSensorError, match="Z"):
            load_distances(p, SensorRegistry(("A", "B")))

    def test_negative_cost(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("from,to,cost\nA,B,-3\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="positive"):
            load_distances(p, SensorRegistry(("A", "B")))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,c\nA,B,1\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="header"):
            load_distances(p, SensorRegistry(("A", "B")))


class TestBuildAdjacency:
    def test_diagonal_is_one(self):
        table = DistanceTable(entries=(("A", "B", 1000.0), ("B", "A", 2000.0)))
        graph = build_adjacency(table, SensorRegistry(("A", "B")))
        assert np.all(np.diag(graph.adjacency) == 1.0)

    def test_distance_equal_to_sigma_gives_exp_minus_one(self):
        # single listed distance: std is 0, so sigma falls back to the mean,
        # making the kernel value exp(-1)
        table = DistanceTable(entries=(("A", "B", 1234.0),))
        graph = build_adjacency(table, SensorRegistry(("A", "B")))
        assert graph.adjacency[0, 1] == pytest.approx(math.exp(-1), rel=1e-12)
        assert graph.adjacency[0, 1] == pytest.approx(0.36788, abs=5e-6)

    def test_kernel_below_kappa_thresholded(self):
        # construct a pair whose kernel value is exp(-d^2/sigma^2) = 0.05 < 0.1
        base = np.array([1000.0, 3000.0])
        sigma = base.std()
        d_low = sigma * math.sqrt(math.log(1 / 0.05))
        table = DistanceTable(
            entries=(("A", "B", 1000.0), ("B", "C", 3000.0), ("A", "C", float(d_low)))
        )
        registry = SensorRegistry(("A", "B", "C"))
        sigma_all = np.array([1000.0, 3000.0, d_low]).std()
        kernel = math.exp(-((d_low / sigma_all) ** 2))
        graph = build_adjacency(table, registry)
        if kernel < 0.1:
            assert graph.adjacency[0, 2] == 0.0
        # the same pair survives with a permissive threshold
        graph_keep = build_adjacency(table, registry, kappa=0.0)
        assert graph_keep.adjacency[0, 2] == pytest.approx(kernel, rel=1e-12)

    def test_all_zero_distances_degenerate(self):
        table = DistanceTable(entries=(("A", "A", 0.0),))
        with pytest.raises(DegenerateInputError):
            build_adjacency(table, SensorRegistry(("A",)))

    @given(
        dists=st.lists(st.floats(min_value=10.0, max_value=1e5), min_size=1, max_size=6),
        kappa1=st.floats(min_value=0.0, max_value=1.0),
        kappa2=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry_range_and_monotone_threshold(self, dists, kappa1, kappa2):
        ids = [f"s{i}" for i in range(len(dists) + 1)]
        registry = SensorRegistry(tuple(ids))
        entries = []
        for i, d in enumerate(dists):
            entries.append((ids[i], ids[i + 1], d))
            entries.append((ids[i + 1], ids[i], d))
        table = DistanceTable(entries=tuple(entries))
        lo, hi = sorted([kappa1, kappa2])
        w_lo = build_adjacency(table, registry, kappa=lo).adjacency
        w_hi = build_adjacency(table, registry, kappa=hi).adjacency
        for w in (w_lo, w_hi):
            assert np.array_equal(w, w.T)
            assert w.min() >= 0.0 and w.max() <= 1.0
        # raising kappa never increases an entry and never revives a zero
        assert np.all(w_hi <= w_lo + 1e-15)
        assert not np.any((w_lo == 0.0) & (w_hi > 0.0))


class TestDurationMatrixIO:
    def test_table_row_lands_in_0745_bucket(self, tmp_path):
        sid = "Triq Diċembru 13, Il-Marsa"
        p = tmp_path / "m.csv"
        p.write_text(
            f'sensor_id,day_index,minutes_of_day,value\n"{sid}",0,465,115.37\n',
            encoding="utf-8",
        )
        m = load_duration_matrix(p, SensorRegistry((sid,)))
        assert m.get(sid, 0, 465) == 115.37  # 465 minutes == 07:45

    def test_header_only_file_is_all_absent(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("sensor_id,day_index,minutes_of_day,value\n", encoding="utf-8")
        m = load_duration_matrix(p, SensorRegistry(("A",)), num_days=2)
        from tempograph import completeness

        assert completeness(m) == 0.0

    def test_duplicate_cell_last_write_wins_with_warning(self, tmp_path, caplog):
        p = tmp_path / "m.csv"
        p.write_text(
            "sensor_id,day_index,minutes_of_day,value\nA,0,465,100.0\nA,0,465,120.5\n",
            encoding="utf-8",
        )
        with caplog.at_level(logging.WARNING, logger="tempograph.ingest"):
            m = load_duration_matrix(p, SensorRegistry(("A",)))
        assert m.get("A", 0, 465) == 120.5
        assert any("duplicate cell" in rec.message for rec in caplog.records)

    def test_negative_value_names_row(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("sensor_id,day_index,minutes_of_day,value\nA,0,465,-1\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=":2:"):
            load_duration_matrix(p, SensorRegistry(("A",)))

    def test_unknown_sensor(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("sensor_id,day_index,minutes_of_day,value\nZ,0,465,1\n", encoding="utf-8")
        with pytest.raises(UnknownSensorError, match="Z"):
            load_duration_matrix(p, SensorRegistry(("A",)))

    @given(
        cells=st.dictionaries(
            keys=st.tuples(
                st.sampled_from(["A", "B"]),
                st.integers(min_value=0, max_value=2),
                st.integers(min_value=0, max_value=287).map(lambda i: i * 5),
            ),
            values=st.floats(
                min_value=0.0, max_value=1e12, allow_nan=False, allow_infinity=False
            ),
            max_size=25,
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_save_load_roundtrip_bit_exact(self, cells, tmp_path_factory):
        tmp_path = tmp_path_factory.mktemp("roundtrip")
        m = DurationMatrix.from_cells(["A", "B"], num_days=3, cells=cells)
        p = tmp_path / "m.csv"
        save_duration_matrix(m, p)
        back = load_duration_matrix(p, SensorRegistry(("A", "B")), num_days=3)
        assert np.array_equal(m.values, back.values, equal_nan=True)
        # a second round trip writes identical bytes
        p2 = tmp_path / "m2.csv"
        save_duration_matrix(back, p2)
        assert p.read_bytes() == p2.read_bytes()


def _bundle(n_sensors=3, num_days=2):
    ids = tuple(f"s{i}" for i in range(n_sensors))
    registry = SensorRegistry(ids)
    entries = tuple((ids[i], ids[i + 1], 1000.0 * (i + 1)) for i in range(n_sensors - 1))
    graph = build_adjacency(DistanceTable(entries=entries), registry)
    matrix = DurationMatrix.from_cells(ids, num_days, {(ids[0], 0, 0): 5.0})
    return DatasetBundle(registry=registry, graph=graph, matrix=matrix, name="fixture")


class TestValidateBundle:
    def test_consistent_bundle_has_no_findings(self):
        assert validate_bundle(_bundle()) == []

    def test_dimension_mismatch_reported(self):
        b = _bundle()
        short = DurationMatrix.empty(b.registry.ids[:-1], num_days=2)
        findings = validate_bundle(DatasetBundle(b.registry, b.graph, short, name="x"))
        assert any("do not match registry" in f for f in findings)

    def test_out_of_range_adjacency_reported(self):
        b = _bundle()
        # force an out-of-range entry past the constructor checks
        bad = object.__new__(SensorGraph)
        adj = np.array(b.graph.adjacency)
        adj[0, 1] = 1.2
        object.__setattr__(bad, "nodes", b.graph.nodes)
        object.__setattr__(bad, "edges", b.graph.edges)
        object.__setattr__(bad, "adjacency", adj)
        findings = validate_bundle(DatasetBundle(b.registry, bad, b.matrix, name="x"))
        assert any("outside [0, 1]" in f for f in findings)


class TestBundleRoundtrip:
    def test_save_load_bundle(self, tmp_path):
        b = _bundle()
        out = tmp_path / "bundle"
        save_bundle(
            DatasetBundle(
                b.registry,
                b.graph,
                b.matrix,
                name="fixture",
                extra={"distance_entries": [("s0", "s1", 1000.0), ("s1", "s2", 2000.0)]},
            ),
            out,
        )
        back = load_bundle(out)
        assert back.registry.ids == b.registry.ids
        assert np.array_equal(back.matrix.values, b.matrix.values, equal_nan=True)
        assert back.name == "fixture"
        assert validate_bundle(back) == []

    def test_locations_roundtrip(self, tmp_path):
        p = tmp_path / "loc.csv"
        p.write_text(
            "sensor_id,latitude,longitude\nA,35.8989,14.5146\n",
            encoding="utf-8",
        )
        locs = load_locations(p, SensorRegistry(("A",)))
        assert locs[0].latitude == 35.8989

    def test_location_range_validated(self, tmp_path):
        p = tmp_path / "loc.csv"
        p.write_text("sensor_id,latitude,longitude\nA,95.0,10.0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="latitude"):
            load_locations(p)

    def test_speed_unit_survives_roundtrip(self, tmp_path):
        ids = ("r1", "r2")
        m = DurationMatrix.from_cells(
            ids, 1, {("r1", 0, 0): 55.0}, interval_width_minutes=15, unit=Unit.SPEED_KMH
        )
        b = DatasetBundle(
            registry=SensorRegistry(ids),
            graph=SensorGraph(nodes=ids, edges=(), adjacency=np.eye(2)),
            matrix=m,
            name="speedy",
        )
        save_bundle(b, tmp_path / "out")
        back = load_bundle(tmp_path / "out")
        assert back.matrix.unit is Unit.SPEED_KMH
        assert back.matrix.interval_width_minutes == 15
