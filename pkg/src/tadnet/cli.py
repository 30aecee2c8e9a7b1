"""``tadnet`` command line: detect, simulate, eval, diagram, distance-series."""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import asdict
from importlib import metadata
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from . import bench
from .cliqueph import CliqueLimitError, layer_pd
from .geodesic import densify
from .mlgraph import (
    IngestionError,
    NormalizationScope,
    TransformKind,
    WeightTransform,
    format_float,
    ingest_edge_list,
    write_edge_list,
)
from .pdmetric import DiagramDistance
from .pipeline import (
    WORKSPACE_ENV,
    LayerResourceError,
    Mode,
    PipelineConfig,
    PipelineError,
    compute_spds,
    distance_series,
    layer_distance_series,
    prepare_layer,
    run,
)
from .sesd import SeriesTooShortError, SesdConfig, decompose

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RESOURCE = 3

logger = logging.getLogger("tadnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def __init__(self, prog: str) -> None:
        super().__init__(prog, width=100, max_help_position=36)

    def _get_help_string(self, action: argparse.Action) -> str:
        text = action.help or ""
        if not action.option_strings or action.required or action.default is argparse.SUPPRESS:
            return text
        if action.default is None:
            return f"{text} (default: unset)"
        return super()._get_help_string(action)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# -- argument groups ---------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="count", default=0, help="log INFO (-v) or DEBUG (-vv) to stderr")


def _add_transform(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("weights")
    g.add_argument("--transform", choices=[k.value for k in TransformKind], default=TransformKind.RECIPROCAL.value,
                   help="raw count to filtration weight")
    g.add_argument("--scope", choices=[s.value for s in NormalizationScope],
                   default=NormalizationScope.SNAPSHOT_LAYER.value, help="normalization scope of the transform")


def _add_tstep(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("diagrams")
    g.add_argument("--kmax", type=int, default=4, help="largest clique size")
    g.add_argument("--sample-top-edges", type=int, default=None, metavar="P",
                   help="keep the P most active edges per layer")
    g.add_argument("--sample-node-budget", type=int, default=None, metavar="N",
                   help="keep the most active edges until N nodes are covered")
    g.add_argument("--clique-ceiling", type=int, default=PipelineConfig.clique_ceiling,
                   help="abort a layer once this many cliques are enumerated")


def _add_distance(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("distance")
    g.add_argument("--distance", default="w1", help="w1, w2, w<r> or bottleneck")
    g.add_argument("--spd-pooled", action="store_true", help="merge layer blocks before matching")
    g.add_argument("--match-across-k", action="store_true", help="allow points of different k to match")


def _add_detection(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detection")
    g.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.TAD.value,
                   help="stacked detection or per-layer detection combined by union/intersection")
    g.add_argument("--period", type=int, default=SesdConfig.period, help="seasonal period in snapshots")
    g.add_argument("--alpha", type=float, default=0.05, help="global significance level")
    g.add_argument("--max-anoms", type=float, default=SesdConfig.max_anoms_fraction,
                   help="upper bound on the flagged fraction of the series")
    g.add_argument("--trend-window", type=int, default=SesdConfig.trend_window,
                   help="trend median width in periods")
    g.add_argument("--no-robust", action="store_true", help="use mean/std instead of median/MAD in the ESD test")
    g.add_argument("--no-bonferroni", action="store_true", help="test every layer at alpha in stad modes")


def _add_runtime(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("runtime")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for the diagram step")
    g.add_argument("--workspace", default=None,
                   help=f"diagram cache directory (falls back to ${WORKSPACE_ENV}; no cache when unset)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tadnet", description="Topological anomaly detection in temporal multilayer networks.",
                     formatter_class=_HelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, description=help_text, formatter_class=_HelpFormatter)

    p = add("detect", "Run anomaly detection over an edge-list CSV.")
    p.add_argument("--input", required=True, help="edge CSV with header t,layer,src,dst,weight")
    p.add_argument("--report", default="-", help="report JSON path ('-' for stdout)")
    p.add_argument("--series", default=None, help="also write the distance series CSV here")
    p.add_argument("--dump-geodesic", default=None, metavar="DIR",
                   help="write each densified layer as DIR/<t>_<layer>.csv")
    p.add_argument("--dump-decomposition", default=None, metavar="PATH",
                   help="write the S-ESD decomposition of the distance series as CSV")
    _add_detection(p)
    _add_distance(p)
    _add_tstep(p)
    _add_transform(p)
    _add_runtime(p)
    _add_common(p)

    p = add("simulate", "Generate a synthetic multilayer sequence with one planted anomaly.")
    d = bench.SyntheticSpec()
    p.add_argument("--layers", type=int, default=d.layers, help="number of layers")
    p.add_argument("--T", type=int, default=d.T, dest="T", help="number of snapshots")
    p.add_argument("--nodes", type=int, default=d.nodes, help="nodes shared by all layers")
    p.add_argument("--mean-degree", type=float, default=d.mean_degree, help="expected mean degree per layer")
    p.add_argument("--degree-exponent", type=float, default=d.degree_exponent,
                   help="power-law exponent of expected degree on node rank")
    p.add_argument("--mean-count", type=float, default=d.mean_count, help="Poisson mean of edge counts minus one")
    p.add_argument("--anomaly", choices=[a.value for a in bench.AnomalyType], default=d.anomaly.value,
                   help="kind of planted anomaly")
    p.add_argument("--at", type=int, default=d.at, help="anomaly time")
    p.add_argument("--magnitude", type=float, default=d.magnitude,
                   help="intensity multiplier, or clique size for clique-plant")
    p.add_argument("--affected-layers", default="", help="comma separated 0-based layer indices (empty: all)")
    p.add_argument("--seed", type=int, default=d.seed, help="generator seed")
    p.add_argument("--edges-out", default="edges.csv", help="edge CSV path")
    p.add_argument("--events-out", default="events.csv", help="ground-truth events CSV path")
    p.add_argument("--meta-out", default=None, help="write generator metadata JSON")
    _add_common(p)

    p = add("eval", "Score predicted anomaly times against ground-truth events.")
    p.add_argument("--predictions", required=True, help="CSV with a t column")
    p.add_argument("--events", required=True, help="CSV with t,label columns")
    p.add_argument("--total", type=int, required=True, help="number of evaluable time points")
    p.add_argument("--window", type=int, default=2, help="match tolerance m in snapshots")
    p.add_argument("--output", default="-", help="metrics JSON path ('-' for stdout)")
    _add_common(p)

    p = add("diagram", "Write the clique-community persistence diagram of one layer at one time.")
    p.add_argument("--input", required=True, help="edge CSV with header t,layer,src,dst,weight")
    p.add_argument("--t", type=int, required=True, help="snapshot time")
    p.add_argument("--layer", required=True, help="layer name")
    p.add_argument("--output", default="-", help="diagram CSV path ('-' for stdout)")
    _add_tstep(p)
    _add_transform(p)
    _add_common(p)

    p = add("distance-series", "Write the distance between consecutive snapshot diagrams.")
    p.add_argument("--input", required=True, help="edge CSV with header t,layer,src,dst,weight")
    p.add_argument("--output", default="-", help="series CSV path ('-' for stdout)")
    p.add_argument("--per-layer", action="store_true", help="one column per layer instead of the stacked distance")
    _add_distance(p)
    _add_tstep(p)
    _add_transform(p)
    _add_runtime(p)
    _add_common(p)

    p = add("config-schema", "Print every configurable knob with its default as JSON.")
    _add_common(p)
    return parser


# -- config assembly -------------------------------------------------------------


def _transform(args: argparse.Namespace) -> WeightTransform:
    return WeightTransform(TransformKind(args.transform), NormalizationScope(args.scope))


def _distance(args: argparse.Namespace) -> DiagramDistance:
    try:
        return DiagramDistance.parse(args.distance, match_across_k=args.match_across_k, pooled=args.spd_pooled)
    except ValueError as exc:
        raise UsageError(f"--distance: {exc}") from None


def pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """Validate every detection flag before any data is touched."""
    try:
        sesd = SesdConfig(
            period=args.period,
            alpha=args.alpha,
            max_anoms_fraction=args.max_anoms,
            robust=not args.no_robust,
            trend_window=args.trend_window,
        )
        return PipelineConfig(
            distance=_distance(args),
            k_max=args.kmax,
            transform=_transform(args),
            sample_top_edges=args.sample_top_edges,
            sample_node_budget=args.sample_node_budget,
            sesd=sesd,
            mode=Mode(args.mode),
            alpha=args.alpha,
            bonferroni=not args.no_bonferroni,
            clique_ceiling=args.clique_ceiling,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _tstep_config(args: argparse.Namespace, distance: DiagramDistance | None = None) -> PipelineConfig:
    try:
        return PipelineConfig(
            distance=distance or DiagramDistance(),
            k_max=args.kmax,
            transform=_transform(args),
            sample_top_edges=args.sample_top_edges,
            sample_node_budget=args.sample_node_budget,
            clique_ceiling=args.clique_ceiling,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_runtime(args: argparse.Namespace) -> str | None:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args.workspace or os.environ.get(WORKSPACE_ENV) or None


# -- I/O helpers -----------------------------------------------------------------


@contextlib.contextmanager
def _open_out(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        yield fh


def _read_graph(path: str, transform: WeightTransform):
    with open(path, newline="") as fh:
        return ingest_edge_list(fh, transform)


def _write_series(stream: TextIO, times: Sequence[int], columns: dict[str, Sequence[float]]) -> None:
    stream.write(",".join(["t", *columns]) + "\n")
    for i, t in enumerate(times):
        stream.write(",".join([str(t), *(format_float(float(c[i])) for c in columns.values())]) + "\n")


def _dump_json(obj: dict, stream: TextIO) -> None:
    json.dump(obj, stream, indent=2, sort_keys=False, allow_nan=False)
    stream.write("\n")


# -- subcommands -----------------------------------------------------------------


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = pipeline_config(args)
    workspace = _check_runtime(args)
    graph = _read_graph(args.input, cfg.transform)
    logger.info("loaded %d snapshots over layers %s", len(graph), ",".join(graph.layer_names))
    if args.dump_geodesic:
        out = Path(args.dump_geodesic)
        out.mkdir(parents=True, exist_ok=True)
        for snap in graph.snapshots:
            for name, layer in snap.layers.items():
                with open(out / f"{snap.time}_{name}.csv", "w", newline="") as fh:
                    densify(prepare_layer(layer, cfg), name).write_csv(fh)
    report = run(graph, cfg, jobs=args.jobs, workspace=workspace)
    report = {
        "meta": {
            "tool": "tadnet",
            "version": _version(),
            "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "input": args.input,
        },
        **report,
    }
    times = [row["t"] for row in report["distance_series"]]
    dists = [row["distance"] for row in report["distance_series"]]
    if args.series:
        with _open_out(args.series) as fh:
            _write_series(fh, times, {"distance": dists})
    if args.dump_decomposition:
        parts = decompose(dists, cfg.sesd)
        with _open_out(args.dump_decomposition) as fh:
            fh.write("i,t,observed,seasonal,trend,residual\n")
            for i, t in enumerate(times):
                row = (dists[i], parts.seasonal[i], parts.trend[i], parts.residual[i])
                fh.write(f"{i},{t}," + ",".join(format_float(float(v)) for v in row) + "\n")
    with _open_out(args.report) as fh:
        _dump_json(report, fh)
    logger.info("flagged %d time(s): %s", len(report["anomalies"]), report["anomalies"])
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        affected = tuple(int(x) for x in args.affected_layers.split(",") if x.strip())
        spec = bench.SyntheticSpec(
            layers=args.layers, T=args.T, nodes=args.nodes, mean_degree=args.mean_degree,
            degree_exponent=args.degree_exponent, anomaly=bench.AnomalyType(args.anomaly), at=args.at,
            magnitude=args.magnitude, affected_layers=affected, mean_count=args.mean_count, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = bench.simulate(spec)
    with _open_out(args.edges_out) as fh:
        write_edge_list(result.graph, fh)
    with _open_out(args.events_out) as fh:
        bench.write_events(result.truth, fh, label=spec.anomaly.value)
    if args.meta_out:
        with _open_out(args.meta_out) as fh:
            _dump_json(result.metadata, fh)
    logger.info("wrote %s and %s", args.edges_out, args.events_out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.window < 0:
        raise UsageError("--window must be >= 0")
    if args.total < 1:
        raise UsageError("--total must be >= 1")
    with open(args.predictions, newline="") as fh:
        preds = bench.read_predictions(fh)
    with open(args.events, newline="") as fh:
        truth = bench.read_events(fh, args.window)
    outside = [t for t in [*preds, *truth.events] if not 1 <= t <= args.total]
    if outside:
        logger.warning("%d time(s) outside [1, %d]", len(outside), args.total)
    cm = bench.evaluate(preds, truth, args.total)
    with _open_out(args.output) as fh:
        fh.write(bench.metrics_json(cm))
    return EXIT_OK


def cmd_diagram(args: argparse.Namespace) -> int:
    cfg = _tstep_config(args)
    graph = _read_graph(args.input, cfg.transform)
    try:
        snap = graph.snapshot(args.t)
    except KeyError:
        raise IngestionError(f"no snapshot at t={args.t}") from None
    if args.layer not in snap.layers:
        raise IngestionError(f"unknown layer {args.layer!r}; have {', '.join(graph.layer_names)}")
    geo = densify(prepare_layer(snap.layers[args.layer], cfg), args.layer)
    try:
        pd = layer_pd(geo, cfg.k_max, cfg.clique_ceiling)
    except CliqueLimitError as exc:
        raise LayerResourceError(args.t, exc) from exc
    with _open_out(args.output) as fh:
        pd.write_csv(fh)
    return EXIT_OK


def cmd_distance_series(args: argparse.Namespace) -> int:
    cfg = _tstep_config(args, _distance(args))
    workspace = _check_runtime(args)
    graph = _read_graph(args.input, cfg.transform)
    spds = compute_spds(graph, cfg, args.jobs, workspace)
    if args.per_layer:
        columns = layer_distance_series(spds, cfg.distance)
        times = [s.time for s in spds[1:]]
    else:
        times, dists = distance_series(spds, cfg.distance)
        columns = {"distance": dists}
    with _open_out(args.output) as fh:
        _write_series(fh, times, columns)
    return EXIT_OK


def config_schema() -> dict:
    """Machine-readable defaults for every knob."""
    return {
        "pipeline": PipelineConfig().to_dict(),
        "synthetic": bench._spec_dict(bench.SyntheticSpec()),
        "evaluation": {"window": bench.GroundTruth(()).window},
        "choices": {
            "mode": [m.value for m in Mode],
            "transform": [k.value for k in TransformKind],
            "scope": [s.value for s in NormalizationScope],
            "distance": ["w1", "w2", "w<r>", "bottleneck"],
            "anomaly": [a.value for a in bench.AnomalyType],
        },
        "environment": {WORKSPACE_ENV: "diagram cache directory used when --workspace is not given"},
        "exit_codes": {"ok": EXIT_OK, "usage": EXIT_USAGE, "data": EXIT_DATA, "resource": EXIT_RESOURCE},
        "sesd_defaults": asdict(SesdConfig()),
    }


def cmd_config_schema(args: argparse.Namespace) -> int:
    _dump_json(config_schema(), sys.stdout)
    return EXIT_OK


COMMANDS = {
    "detect": cmd_detect,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
    "diagram": cmd_diagram,
    "distance-series": cmd_distance_series,
    "config-schema": cmd_config_schema,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return int(exc.code or 0)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tadnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LayerResourceError, CliqueLimitError, MemoryError) as exc:
        print(f"tadnet {args.command}: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (IngestionError, PipelineError, SeriesTooShortError, OSError, ValueError) as exc:
        print(f"tadnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
