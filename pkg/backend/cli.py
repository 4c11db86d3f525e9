"""Operator entry point: sketch datasets, manage registries, query, evaluate and
benchmark.

Tables go to stdout, logs to stderr, machine-readable reports to ``--out``.
"""

import argparse
import asyncio
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd
from config import settings
from core.codec import read_sketch_file, write_sketch_file
from core.errors import IngestError, InputError, ModelScoutError
from core.record import FORMAT_VERSION, ModelRecord, manifest_from_settings
from core.results import Metric, SearchConfig
from db import store
from engine.search import result_row, score_label, search
from engine.sketchcore import ingest_frame, load_schema, read_csv_table
from harness import bench
from harness.evaluation import AccuracyTable, compare_metrics
from harness.workload import (
    TRUTH_PROXY,
    SyntheticWorkloadSpec,
    generate_workload,
    load_workload_spec,
)

logger = logging.getLogger("model-scout.cli")

QUERY_FORMAT = "model-scout/query"
QUERY_VERSION = 1
_RESCORING = {"auto": None, "on": True, "off": False}


def _print_table(rows: list[dict], columns: list[str]) -> None:
    if not rows:
        print("(no results)")
        return
    print(pd.DataFrame(rows, columns=columns).to_string(index=False))


def cmd_sketch(args) -> int:
    frame = read_csv_table(args.csv)
    schema = load_schema(args.schema) if args.schema else None
    reference = read_sketch_file(args.reference) if args.reference else None
    sketch = ingest_frame(
        frame,
        schema,
        args.partition_size,
        args.bins,
        dataset_id=args.dataset_id or Path(args.csv).stem,
        exclude=args.exclude_column,
        drop_residue=args.drop_residue,
        shuffle_seed=args.shuffle_seed,
        reference=reference,
    )
    out = args.out or Path(args.csv).with_suffix(".sketch.json")
    write_sketch_file(out, sketch)
    print(
        f"{sketch.dataset_id}: {sketch.total_rows} rows, "
        f"{sketch.num_partitions} partitions, {len(sketch.descriptors)} features"
    )
    print(f"wrote {out}")
    return 0


async def _register(args) -> None:
    sketch = read_sketch_file(args.sketch)
    try:
        record = ModelRecord(
            model_id=args.model_id,
            dataset_id=sketch.dataset_id,
            display_name=args.name or args.model_id,
            task_tag=args.task,
            source_accuracy=args.source_accuracy,
            notes=args.notes,
        )
    except ValueError as e:
        raise InputError(str(e)) from e
    if args.create and not Path(args.registry).exists():
        registry = await store.create_registry(
            args.registry, manifest_from_settings(settings)
        )
    else:
        registry = await store.load_registry(args.registry)
    receipt = registry.register_model(record, sketch)
    await store.add_model(args.registry, registry, record, sketch)
    print(
        f"registered {receipt.model_id} ({receipt.dataset_id}): "
        f"{receipt.num_features} features, {receipt.num_postings} postings"
    )


def cmd_register(args) -> int:
    asyncio.run(_register(args))
    return 0


def cmd_remove(args) -> int:
    receipt = asyncio.run(store.remove_model(args.registry, args.model_id))
    suffix = ", dataset sketch removed" if receipt.dataset_removed else ""
    print(f"removed {receipt.model_id}{suffix}")
    return 0


def _search_config(args) -> SearchConfig:
    try:
        return SearchConfig(
            t1=args.t1,
            t2=args.t2,
            t_adaptivity=args.t_adaptivity,
            t_js=args.t_js,
            metric=Metric(args.metric),
            exact_rescoring=_RESCORING[args.exact_rescoring],
            pair_count=args.pair_count,
            top=args.top,
        )
    except ValueError as e:
        raise InputError(str(e)) from e


def cmd_query(args) -> int:
    config = _search_config(args)
    registry = asyncio.run(store.load_registry(args.registry))
    query = read_sketch_file(args.sketch)
    results = search(query, registry, config, settings.RESCORING_MAX_CANDIDATES)
    bits = args.bits or settings.REPORT_BITS
    rows = [result_row(r, config.metric, bits) for r in results]
    _print_table(
        [{"rank": i, **row} for i, row in enumerate(rows, start=1)],
        ["rank", "model_id", "overlap_ratio", "score", "exact_score"],
    )
    if args.out:
        head = {
            "format": QUERY_FORMAT,
            "version": QUERY_VERSION,
            "registry_format_version": registry.manifest.format_version,
            "query": query.dataset_id,
            "metric": config.metric.value,
            "unit": score_label(config.metric, bits),
        }
        bench.write_records(args.out, head, rows)
    return 0


def _read_queries(directory: str | Path) -> dict:
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise IngestError(f"no sketch files in {directory}")
    queries = {}
    for path in paths:
        sketch = read_sketch_file(path)
        queries[sketch.dataset_id] = sketch
    return queries


def cmd_eval(args) -> int:
    registry = asyncio.run(store.load_registry(args.registry))
    queries = _read_queries(args.queries_dir)
    truth = AccuracyTable.read_csv(args.truth)
    report = compare_metrics(
        registry, queries, truth, SearchConfig(t_js=args.t_js), rescore=args.rescore
    )
    print(report.summary_frame().to_string(index=False))
    if args.out:
        report.write_csv(args.out)
        print(f"wrote {len(report.rows)} rows to {args.out}")
    return 0


def _workload_spec(args) -> SyntheticWorkloadSpec:
    if args.workload_spec:
        return load_workload_spec(args.workload_spec)
    return SyntheticWorkloadSpec()


def cmd_bench(args) -> int:
    params = bench.with_seed(manifest_from_settings(settings).jslsh_params, args.seed)
    spec = _workload_spec(args) if args.workload_spec else None
    if args.speedup:
        mode, records = "speedup", [bench.speedup(spec, params, args.t_js)]
    elif args.latency:
        mode, records = "latency", bench.latency(spec, args.partition_sizes)
    elif args.ratio_band:
        mode, records = "ratio-band", [bench.hellinger_js_band(spec)]
    else:
        mode = "sweep"
        records = bench.sweep(args.sweep, args.values, spec, params, args.t_js)
    head = bench.header(mode, t_js=args.t_js, hash_seed=params.master_seed)
    if mode == "sweep":
        head["parameter"] = args.sweep
    for line in bench.write_records(args.out, head, records):
        print(line)
    return 0


def _inspect_sketch(path: Path) -> None:
    sketch = read_sketch_file(path)
    print(
        f"sketch {sketch.dataset_id}: {sketch.total_rows} rows, "
        f"{sketch.num_partitions} partitions of {sketch.partition_size_m}, "
        f"{sketch.bins_per_numeric_feature} bins per numeric feature"
    )
    _print_table(
        [
            {"feature": d.name, "kind": d.kind.value, "bins": d.num_bins}
            for d in sketch.descriptors
        ],
        ["feature", "kind", "bins"],
    )


def _inspect_registry(path: Path) -> None:
    registry = asyncio.run(store.load_registry(path))
    manifest = registry.manifest
    print(
        f"registry {path}: format {manifest.format_version}, "
        f"{len(registry)} models, "
        f"{manifest.bins_per_numeric_feature} bins per numeric feature"
    )
    print(f"minhash {manifest.minhash_params}")
    print(f"jslsh {manifest.jslsh_params}")
    print(f"l2lsh {manifest.l2lsh_params}")
    rows = []
    for record in registry.list_models():
        sketch = registry.sketch_for(record.model_id)
        rows.append(
            {
                "model_id": record.model_id,
                "dataset_id": record.dataset_id,
                "name": record.display_name,
                "source_accuracy": record.source_accuracy,
                "partitions": sketch.num_partitions,
                "features": len(sketch.descriptors),
            }
        )
    _print_table(
        rows,
        ["model_id", "dataset_id", "name", "source_accuracy", "partitions", "features"],
    )


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_file() and path.read_bytes()[:16] == b"SQLite format 3\x00":
        _inspect_registry(path)
    else:
        _inspect_sketch(path)
    return 0


async def _generate(args) -> None:
    spec = _workload_spec(args)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    workload = generate_workload(spec)
    out = Path(args.out_dir)
    for sub in ("tables", "sketches", "queries"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    registry_path = out / "registry.db"
    manifest = replace(
        manifest_from_settings(settings), bins_per_numeric_feature=spec.bins
    )
    registry = await store.create_registry(registry_path, manifest)
    for dataset_id in workload.source_ids + workload.query_ids:
        workload.tables[dataset_id].to_csv(
            out / "tables" / f"{dataset_id}.csv", index=False
        )
        sketch = workload.sketch(dataset_id, args.partition_size)
        folder = "queries" if dataset_id in workload.query_ids else "sketches"
        write_sketch_file(out / folder / f"{dataset_id}.json", sketch)
        if folder == "sketches":
            model_id = workload.model_id(dataset_id)
            registry.register_model(
                ModelRecord(
                    model_id=model_id,
                    dataset_id=dataset_id,
                    display_name=model_id,
                    task_tag=f"family-{workload.family_of[dataset_id]}",
                    source_accuracy=workload.source_accuracy[model_id],
                ),
                sketch,
            )
    await store.save_registry(registry, registry_path)
    workload.truth.to_csv(out / "truth.csv")
    metadata = {
        "spec": vars(spec),
        "truth": TRUTH_PROXY,
        "sources": workload.source_ids,
        "queries": workload.query_ids,
        "partition_size": args.partition_size,
        "format_version": FORMAT_VERSION,
    }
    (out / "workload.json").write_text(json.dumps(metadata, indent=2))
    print(
        f"generated {len(workload.source_ids)} registered tables and "
        f"{len(workload.query_ids)} queries in {out}"
    )


def cmd_generate(args) -> int:
    asyncio.run(_generate(args))
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from db import database as db_module

    settings.REGISTRY_PATH = args.registry
    db_module.engine = db_module.make_engine(args.registry)
    db_module.async_session = db_module.make_sessionmaker(db_module.engine)
    from main import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--metric", choices=[m.value for m in Metric], default=Metric.ADAPTIVITY.value
    )
    parser.add_argument("--t1", type=float, default=settings.T1)
    parser.add_argument("--t2", type=float, default=settings.T2)
    parser.add_argument("--t-adaptivity", type=float, default=settings.T_ADAPTIVITY)
    parser.add_argument("--t-js", type=float, default=settings.T_JS)
    parser.add_argument("--top", type=int)
    parser.add_argument(
        "--exact-rescoring", choices=sorted(_RESCORING), default="auto"
    )
    parser.add_argument("--pair-count", action="store_true")
    parser.add_argument("--bits", action="store_true", help="report JS in bits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="model-scout", description=__doc__)
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    parser.add_argument(
        "--seed", type=int, help="override hash seeds (bench) or workload seed"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("sketch", help="sketch a CSV file")
    p.add_argument("csv")
    p.add_argument("--schema", help="JSON mapping of column to numeric/categorical")
    p.add_argument("--bins", type=int, default=settings.BINS_PER_NUMERIC_FEATURE)
    p.add_argument("--partition-size", type=int, default=settings.PARTITION_SIZE)
    p.add_argument("--dataset-id")
    p.add_argument("--exclude-column", action="append", default=[])
    p.add_argument("--drop-residue", action="store_true")
    p.add_argument("--shuffle-seed", type=int)
    p.add_argument("--reference", help="sketch whose bins to reuse")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sketch)

    p = commands.add_parser("register", help="register a model")
    p.add_argument("registry")
    p.add_argument("sketch")
    p.add_argument("--model-id", required=True)
    p.add_argument("--name", default="")
    p.add_argument("--task", default="")
    p.add_argument("--source-accuracy", type=float)
    p.add_argument("--notes", default="")
    p.add_argument("--create", action="store_true")
    p.set_defaults(func=cmd_register)

    p = commands.add_parser("remove", help="remove a model")
    p.add_argument("registry")
    p.add_argument("model_id")
    p.set_defaults(func=cmd_remove)

    p = commands.add_parser("query", help="rank registered models for a dataset")
    p.add_argument("registry")
    p.add_argument("sketch")
    _add_search_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_query)

    p = commands.add_parser("eval", help="correlate metrics with target accuracy")
    p.add_argument("registry")
    p.add_argument("queries_dir")
    p.add_argument("truth")
    p.add_argument("--t-js", type=float, default=settings.T_JS)
    p.add_argument("--no-rescore", dest="rescore", action="store_false")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("bench", help="LSH benchmarks on a synthetic workload")
    p.add_argument("--workload-spec")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--sweep", choices=bench.SWEEP_PARAMETERS, default="r")
    mode.add_argument("--speedup", action="store_true")
    mode.add_argument("--latency", action="store_true")
    mode.add_argument("--ratio-band", action="store_true")
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument(
        "--partition-sizes",
        type=int,
        nargs="+",
        default=list(bench.LATENCY_PARTITION_SIZES),
    )
    p.add_argument("--t-js", type=float, default=settings.T_JS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = commands.add_parser("inspect", help="describe a registry or sketch file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = commands.add_parser("generate", help="write a synthetic workload")
    p.add_argument("out_dir")
    p.add_argument("--workload-spec")
    p.add_argument("--partition-size", type=int, default=settings.PARTITION_SIZE)
    p.set_defaults(func=cmd_generate)

    p = commands.add_parser("serve", help="run the HTTP service")
    p.add_argument("--registry", default=settings.REGISTRY_PATH)
    p.add_argument("--host", default=settings.HOST)
    p.add_argument("--port", type=int, default=settings.PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ModelScoutError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
