"""Command-line entry point wiring the whole flow.

Subcommands mirror the library modules: ``ingest``, ``pipeline``, ``synth``,
``analyze``, ``train``, ``eval``, ``report``. Every subcommand accepts
``--manifest PATH``: the manifest records the command, its flags, input file
hashes, the seed and the outputs. Re-running with the manifest already on
disk checks that the invocation and inputs are unchanged and reuses the
recorded timestamp, so a repeated run reproduces its outputs byte for byte.

Exit codes: 0 success, 1 validation (bad flags or bad input data),
2 internal/numerical errors. Diagnostics go to stderr, data to files.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import Unit, completeness
from .errors import (
    NumericalError,
    ProviderError,
    SynthesisError,
    TempographError,
    ValidationError,
)
from .eval import (
    EvalReport,
    compare_report,
    config_hash,
    evaluate_model,
    rows_from_json,
)
from .ingest import (
    DatasetBundle,
    build_adjacency,
    load_bundle,
    load_distances,
    load_locations,
    load_sensor_ids,
    save_bundle,
    validate_bundle,
)
from .models import ModelConfig, TrainConfig, load_model, save_model, train_model
from .pipeline import (
    FixtureRoadProvider,
    HttpRoadProvider,
    compile_dataset,
    complete_roads,
    dbscan_cluster,
    label_activity_centers,
    load_trips,
)
from .stats import adf_test, anova_oneway, boxplot_summary, detect_peaks, fit_arima, forecast_arima
from .synth import SynthConfig, fill_all, PROVENANCE_NAMES, PROVENANCE_OBSERVED


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (validation) on bad flags instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


@dataclass
class RunManifest:
    command: str
    args: dict
    input_hashes: dict
    seed: int | None
    tool_version: str
    timestamp: str
    outputs: list = field(default_factory=list)

    def fingerprint(self) -> dict:
        return {
            "command": self.command,
            "args": self.args,
            "input_hashes": self.input_hashes,
            "seed": self.seed,
        }


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _hash_inputs(paths: list[str | Path]) -> dict:
    hashes: dict[str, str] = {}
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    hashes[str(child)] = _hash_file(child)
        elif path.is_file():
            hashes[str(path)] = _hash_file(path)
    return hashes


def _open_manifest(
    command: str, args: argparse.Namespace, inputs: list, seed: int | None
) -> tuple[RunManifest, Path | None]:
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    manifest = RunManifest(
        command=command,
        args={k: str(v) for k, v in flags.items() if v is not None},
        input_hashes=_hash_inputs(inputs),
        seed=seed,
        tool_version=__version__,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    )
    manifest_path = Path(args.manifest) if args.manifest else None
    if manifest_path and manifest_path.exists():
        recorded = json.loads(manifest_path.read_text(encoding="utf-8"))
        previous = RunManifest(**recorded)
        if previous.fingerprint() != manifest.fingerprint():
            raise ValidationError(
                f"manifest {manifest_path} records a different invocation; "
                "use a fresh manifest path or matching flags/inputs"
            )
        manifest.timestamp = previous.timestamp
    return manifest, manifest_path


def _close_manifest(manifest: RunManifest, manifest_path: Path | None, outputs: list) -> None:
    manifest.outputs = [str(o) for o in outputs]
    if manifest_path:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text(
            json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8"
        )


def _add_manifest_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", help="write/verify a reproducibility manifest JSON")


# ---------------------------------------------------------------- subcommands


def _cmd_ingest(args) -> int:
    manifest, manifest_path = _open_manifest(
        "ingest",
        args,
        [args.ids, args.distances, args.matrix] + ([args.locations] if args.locations else []),
        seed=None,
    )
    registry = load_sensor_ids(args.ids)
    distances = load_distances(args.distances, registry)
    graph = build_adjacency(distances, registry, kappa=args.kappa)
    from .ingest import load_duration_matrix

    matrix = load_duration_matrix(
        args.matrix, registry, interval_width_minutes=args.width, unit=Unit(args.unit)
    )
    locations = load_locations(args.locations, registry) if args.locations else None
    bundle = DatasetBundle(
        registry=registry,
        graph=graph,
        matrix=matrix,
        locations=locations,
        name=args.name,
        extra={"distance_entries": distances.entries, "kappa": args.kappa},
    )
    findings = validate_bundle(bundle)
    if findings:
        for finding in findings:
            print(f"invalid bundle: {finding}", file=sys.stderr)
        return 1
    save_bundle(bundle, args.out)
    print(
        f"bundle {args.name!r}: {len(registry)} sensors, {matrix.num_days} days, "
        f"completeness {completeness(matrix):.4f} -> {args.out}",
        file=sys.stderr,
    )
    _close_manifest(manifest, manifest_path, [args.out])
    return 0


def _make_provider(spec: str | None):
    if spec is None:
        return None
    if spec.startswith("fixture:"):
        return FixtureRoadProvider.from_json(spec[len("fixture:") :])
    if spec.startswith("http:") or spec.startswith("https:"):
        return HttpRoadProvider(spec)
    raise ValidationError(f"unknown provider spec {spec!r}; use fixture:<file> or http(s)://...")


def _cmd_pipeline(args) -> int:
    provider_inputs = (
        [args.provider[len("fixture:") :]] if args.provider and args.provider.startswith("fixture:") else []
    )
    manifest, manifest_path = _open_manifest(
        "pipeline", args, [args.trips, args.registry] + provider_inputs, seed=None
    )
    registry = load_sensor_ids(args.registry)
    trips = load_trips(args.trips)
    provider = _make_provider(args.provider)
    completed = []
    for trip in trips:
        if not trip.is_gap_free():
            if provider is None:
                raise ValidationError(
                    f"trip {trip.trip_id!r} has road gaps but no --provider was given"
                )
            trip = complete_roads(trip, provider)
        completed.append(trip)
    matrix = compile_dataset(completed, registry, width_minutes=args.width)
    points = [
        (p.latitude, p.longitude) for trip in completed for p in trip.points
    ]
    clusters = label_activity_centers(
        dbscan_cluster(points, eps_meters=args.eps, min_pts=args.min_pts)
    )
    bundle = DatasetBundle(
        registry=registry,
        graph=_self_loop_graph(registry),
        matrix=matrix,
        name=Path(args.out).name,
    )
    save_bundle(bundle, args.out)
    centers_path = Path(args.out) / "activity_centers.json"
    centers_path.write_text(
        json.dumps(
            [
                {
                    "label": c.label,
                    "size": c.size,
                    "centroid": {"lat": c.centroid[0], "lon": c.centroid[1]},
                    "member_indices": list(c.member_indices),
                }
                for c in clusters
            ],
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(
        f"{len(completed)} trips -> matrix completeness {completeness(matrix):.4f}, "
        f"{len(clusters)} clusters -> {args.out}",
        file=sys.stderr,
    )
    _close_manifest(manifest, manifest_path, [args.out])
    return 0


def _self_loop_graph(registry):
    from .core import SensorGraph

    return SensorGraph(
        nodes=registry.ids, edges=(), adjacency=np.eye(len(registry), dtype=np.float64)
    )


def _cmd_synth(args) -> int:
    manifest, manifest_path = _open_manifest("synth", args, [args.bundle], seed=args.seed)
    bundle = load_bundle(args.bundle)
    cfg = SynthConfig(
        rng_seed=args.seed, sample_fraction=args.fraction, min_support=args.min_support
    )
    filled, report = fill_all(bundle.matrix, cfg)
    save_bundle(bundle.with_matrix(filled), args.out)
    out = Path(args.out)
    (out / "synth_report.json").write_text(
        json.dumps(
            {
                "config": {
                    "rng_seed": cfg.rng_seed,
                    "sample_fraction": cfg.sample_fraction,
                    "min_support": cfg.min_support,
                    "rng_algorithm": "pcg64",
                },
                "counts": report.counts(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_provenance_csv(out / "synth_provenance.csv", bundle, report)
    print(
        f"filled {report.filled_by_day_rule} by day rule, "
        f"{report.filled_by_interval_rule} by interval rule -> {args.out}",
        file=sys.stderr,
    )
    _close_manifest(
        manifest, manifest_path, [args.out]
    )
    return 0


def _write_provenance_csv(path: Path, bundle: DatasetBundle, report) -> None:
    import csv as _csv

    width = bundle.matrix.interval_width_minutes
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["sensor_id", "day_index", "minutes_of_day", "source"])
        synthesized = np.argwhere(
            (report.provenance != PROVENANCE_OBSERVED)
        )
        for s, d, b in synthesized:
            writer.writerow(
                [
                    bundle.matrix.sensors[s],
                    int(d),
                    int(b) * width,
                    PROVENANCE_NAMES[int(report.provenance[s, d, b])],
                ]
            )


def _parse_interval(text: str) -> int:
    try:
        hours, minutes = text.split(":")
        value = int(hours) * 60 + int(minutes)
    except ValueError:
        raise ValidationError(f"interval must be HH:MM, got {text!r}") from None
    if not 0 <= value < 1440:
        raise ValidationError(f"interval {text!r} outside the day")
    return value


def _cmd_analyze(args) -> int:
    manifest, manifest_path = _open_manifest("analyze", args, [args.bundle], seed=None)
    bundle = load_bundle(args.bundle)
    from .core import slice_interval

    minutes = _parse_interval(args.interval)
    series = [v for _, v in slice_interval(bundle.matrix, args.sensor, minutes) if v is not None]
    if len(series) < 30:
        raise ValidationError(
            f"only {len(series)} values at {args.interval}; need >= 30 days for the analysis"
        )
    series = np.asarray(series)
    adf = adf_test(series)
    model = fit_arima(series)
    forecasts = forecast_arima(model, series, horizon=args.horizon)

    width = bundle.matrix.interval_width_minutes
    values = bundle.matrix.values[bundle.matrix.sensor_index(args.sensor)]
    groups, group_labels = [], []
    if args.anova_groups == "hourly":
        for hour in range(24):
            buckets = [b for b in range(values.shape[1]) if (b * width) // 60 == hour]
            group = values[:, buckets][~np.isnan(values[:, buckets])]
            if group.size >= 2:
                groups.append(group.tolist())
                group_labels.append(f"{hour:02d}:00")
    anova = anova_oneway(groups) if len(groups) >= 2 else None
    summaries = boxplot_summary(groups) if groups else []
    profile = np.nanmean(values, axis=0)
    profile_minutes = [b * width for b in range(values.shape[1])]
    peaks = detect_peaks(profile_minutes, profile, min_separation_buckets=args.peak_separation)

    payload = {
        "sensor": args.sensor,
        "interval": args.interval,
        "series_length": int(series.size),
        "adf": {
            "statistic": adf.statistic,
            "lags_used": adf.lags_used,
            "reject_at_5pct": adf.reject_at_5pct,
            "critical_values": adf.critical_values,
        },
        "arima": {
            "order": [model.p, model.d, model.q],
            "ar_coeffs": list(model.ar_coeffs),
            "ma_coeffs": list(model.ma_coeffs),
            "intercept": model.intercept,
            "sigma2": model.sigma2,
            "aic": model.aic,
        },
        "forecasts": forecasts.tolist(),
        "anova": None
        if anova is None
        else {
            "f_statistic": anova.f_statistic,
            "df_between": anova.df_between,
            "df_within": anova.df_within,
            "p_value": anova.p_value,
            "groups": group_labels,
        },
        "boxplot": [
            {
                "group": label,
                "min": s.minimum,
                "q1": s.q1,
                "median": s.median,
                "q3": s.q3,
                "max": s.maximum,
                "outliers": list(s.outliers),
            }
            for label, s in zip(group_labels, summaries)
        ],
        "peaks": [{"minutes_of_day": m, "value": v} for m, v in peaks],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"analysis of {args.sensor!r} at {args.interval} -> {args.out}", file=sys.stderr)
    _close_manifest(manifest, manifest_path, [args.out])
    return 0


def _cmd_train(args) -> int:
    manifest, manifest_path = _open_manifest("train", args, [args.bundle], seed=args.seed)
    bundle = load_bundle(args.bundle)
    if completeness(bundle.matrix) < 1.0:
        raise ValidationError("bundle matrix is incomplete; run `tempograph synth` first")
    model_config = ModelConfig(
        kind=args.model,
        num_nodes=len(bundle.registry),
        history_steps=args.history,
        horizon_steps=args.horizon,
        hidden_units=args.hidden,
    )
    train_config = TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    trained, report = train_model(bundle, model_config, train_config)
    save_model(trained, args.out)
    (Path(args.out) / "train_report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"{args.model} trained {report.epochs_run} epochs in "
        f"{report.wall_clock_seconds:.1f}s; test MAE {report.test_mae:.4f} -> {args.out}",
        file=sys.stderr,
    )
    _close_manifest(manifest, manifest_path, [args.out])
    return 0


def _cmd_eval(args) -> int:
    if args.model.startswith("baseline:"):
        model_inputs = []
    else:
        # hash the model artifact only; the training report logs wall-clock time
        model_inputs = [Path(args.model) / "model.json", Path(args.model) / "params.bin"]
    manifest, manifest_path = _open_manifest(
        "eval", args, [args.bundle] + model_inputs, seed=args.seed
    )
    bundle = load_bundle(args.bundle)
    if args.model.startswith("baseline:"):
        target = args.model
        model_config = ModelConfig(
            kind="dcrnn",
            num_nodes=len(bundle.registry),
            history_steps=args.history,
            horizon_steps=args.horizon,
        )
        train_config = TrainConfig(batch_size=args.batch, epochs=0, seed=args.seed)
    else:
        trained = load_model(args.model)
        target = trained
        model_config = trained.model_config
        train_config = trained.train_config
    row = evaluate_model(target, bundle, model_config, train_config)
    report = EvalReport(
        rows=(row,),
        seed=train_config.seed,
        config_hash=config_hash(model_config.to_dict(), train_config.to_dict(), bundle.name),
        timestamp=manifest.timestamp,
    )
    prefix = _report_prefix(args.out)
    json_path = prefix.with_suffix(".json")
    json_path.write_text(report.to_json(), encoding="utf-8")
    rendered = compare_report(report.rows)
    prefix.with_suffix(".txt").write_text(rendered.text, encoding="utf-8")
    prefix.with_suffix(".csv").write_text(rendered.csv, encoding="utf-8")
    sys.stdout.write(rendered.text)
    _close_manifest(
        manifest,
        manifest_path,
        [str(prefix.with_suffix(ext)) for ext in (".json", ".txt", ".csv")],
    )
    return 0


def _report_prefix(out: str) -> Path:
    path = Path(out)
    if path.suffix in (".json", ".txt", ".csv"):
        return path.with_suffix("")
    return path


def _cmd_report(args) -> int:
    manifest, manifest_path = _open_manifest("report", args, list(args.merge), seed=None)
    rows: list = []
    for source in args.merge:
        rows.extend(rows_from_json(Path(source).read_text(encoding="utf-8")))
    rendered = compare_report(rows)
    outputs = []
    if args.out:
        prefix = _report_prefix(args.out)
        prefix.with_suffix(".txt").write_text(rendered.text, encoding="utf-8")
        prefix.with_suffix(".json").write_text(rendered.json, encoding="utf-8")
        prefix.with_suffix(".csv").write_text(rendered.csv, encoding="utf-8")
        outputs = [str(prefix.with_suffix(ext)) for ext in (".txt", ".json", ".csv")]
    sys.stdout.write(rendered.text)
    _close_manifest(manifest, manifest_path, outputs)
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="tempograph", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tempograph {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="<command>")

    p = sub.add_parser("ingest", parents=[], help="build a dataset bundle from the input files")
    p.add_argument("--ids", required=True, help="graph_sensor_ids.txt")
    p.add_argument("--distances", required=True, help="distances CSV (from,to,cost)")
    p.add_argument("--locations", help="optional sensor locations CSV")
    p.add_argument("--matrix", required=True, help="duration matrix long CSV")
    p.add_argument("--width", type=int, default=5, help="interval width in minutes")
    p.add_argument("--unit", choices=[u.value for u in Unit], default=Unit.DURATION_SECONDS.value)
    p.add_argument("--kappa", type=float, default=0.1, help="adjacency kernel threshold")
    p.add_argument("--name", default="dataset")
    p.add_argument("--out", required=True, help="bundle output directory")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("pipeline", help="turn raw trip logs into a dataset bundle")
    p.add_argument("--trips", required=True, help="trip JSON-lines file")
    p.add_argument("--registry", required=True, help="sensor ids file")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument("--eps", type=float, default=500.0, help="DBSCAN radius in meters")
    p.add_argument("--min-pts", type=int, default=4, dest="min_pts")
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--provider", help="fixture:<file> or http(s)://... route provider")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("synth", help="fill every missing cell of a bundle's matrix")
    p.add_argument("--bundle", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--min-support", type=int, default=3, dest="min_support")
    p.add_argument("--out", required=True)
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("analyze", help="statistical battery for one sensor interval")
    p.add_argument("--bundle", required=True)
    p.add_argument("--sensor", required=True)
    p.add_argument("--interval", required=True, help="time of day HH:MM")
    p.add_argument("--anova-groups", choices=["hourly"], default="hourly", dest="anova_groups")
    p.add_argument("--horizon", type=int, default=3, help="ARIMA forecast steps")
    p.add_argument("--peak-separation", type=int, default=6, dest="peak_separation")
    p.add_argument("--out", required=True, help="report JSON path")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("train", help="train a forecasting model on a complete bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", choices=["dcrnn", "stgcn"], required=True)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--history", type=int, default=12)
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.01, dest="learning_rate")
    p.add_argument("--out", required=True, help="model output directory")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a model directory or baseline:ha on a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True, help="model directory or baseline:ha")
    p.add_argument("--history", type=int, default=12, help="window for baselines")
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="report path prefix (writes .txt/.json/.csv)")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="merge stored row JSONs into one comparison table")
    p.add_argument("--merge", nargs="+", required=True, help="row JSON files")
    p.add_argument("--out", help="optional output path prefix")
    _add_manifest_flag(p)
    p.set_defaults(func=_cmd_report)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse raises for --help (0) and errors (1)
        return int(exit_.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValidationError, SynthesisError) as exc:
        print(f"tempograph {args.command}: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ProviderError, TempographError) as exc:
        print(f"tempograph {args.command}: internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        print(f"tempograph {args.command}: unexpected error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())
