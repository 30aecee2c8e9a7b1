"""Topological anomaly detection over temporal multilayer graphs.

The T-step turns every snapshot into a stacked persistence diagram
(sample, densify, clique-community persistence per layer); the AD-step runs
S-ESD over the distances between consecutive diagrams.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .cliqueph import DEFAULT_CLIQUE_CEILING, CliqueLimitError, PersistenceDiagram, layer_pd
from .geodesic import densify
from .mlgraph import (
    LayerGraph,
    MultilayerSnapshot,
    TemporalMultilayerGraph,
    WeightTransform,
    format_float,
    sample_node_budget,
    sample_top_edges,
)
from .pdmetric import (
    CapMismatchWarning,
    DiagramDistance,
    StackedPersistenceDiagram,
    aggregate_blocks,
    diagram_distance,
    spd_distance,
    stack,
)
from .sesd import SesdConfig, detect

logger = logging.getLogger(__name__)

WORKSPACE_ENV = "TADNET_WORKSPACE"
CACHE_FORMAT = 1


class Mode(str, enum.Enum):
    TAD = "tad"
    STAD_UNION = "stad-union"
    STAD_INTERSECT = "stad-intersect"


class PipelineError(RuntimeError):
    pass


class TooFewSnapshotsError(PipelineError, ValueError):
    pass


class LayerResourceError(PipelineError):
    """A per-layer resource limit was hit; carries the snapshot time."""

    def __init__(self, time: int, cause: CliqueLimitError) -> None:
        super().__init__(f"t={time}: {cause}")
        self.time = time
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    distance: DiagramDistance = field(default_factory=DiagramDistance)
    k_max: int = 4
    transform: WeightTransform = field(default_factory=WeightTransform)
    sample_top_edges: int | None = None
    sample_node_budget: int | None = None
    sesd: SesdConfig = field(default_factory=SesdConfig)
    mode: Mode = Mode.TAD
    alpha: float = 0.05
    bonferroni: bool = True
    clique_ceiling: int = DEFAULT_CLIQUE_CEILING

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("sample_top_edges", "sample_node_budget"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.clique_ceiling < 1:
            raise ValueError("clique_ceiling must be >= 1")

    def tstep_key(self) -> dict:
        """Settings that determine the stacked diagrams."""
        return {
            "k_max": self.k_max,
            "sample_top_edges": self.sample_top_edges,
            "sample_node_budget": self.sample_node_budget,
            "clique_ceiling": self.clique_ceiling,
        }

    def to_dict(self) -> dict:
        return {
            "distance": {
                "kind": self.distance.kind.value,
                "r": self.distance.r,
                "match_across_k": self.distance.match_across_k,
                "pooled": self.distance.pooled,
            },
            "k_max": self.k_max,
            "transform": {"kind": self.transform.kind.value, "scope": self.transform.scope.value},
            "sample_top_edges": self.sample_top_edges,
            "sample_node_budget": self.sample_node_budget,
            "sesd": asdict(self.sesd),
            "mode": self.mode.value,
            "alpha": self.alpha,
            "bonferroni": self.bonferroni,
            "clique_ceiling": self.clique_ceiling,
        }


@dataclass
class TadResult:
    times: list[int]
    distances: list[float]
    anomalies: list[int]
    spds: list[StackedPersistenceDiagram] = field(repr=False)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def series(self) -> list[tuple[int, float]]:
        return list(zip(self.times, self.distances))


@dataclass
class StadResult:
    times: list[int]
    per_layer_distances: dict[str, list[float]]
    per_layer_anomalies: dict[str, list[int]]
    anomalies: list[int]
    layer_alpha: float
    spds: list[StackedPersistenceDiagram] = field(repr=False)
    timings: dict[str, float] = field(default_factory=dict)


# -- T-step ----------------------------------------------------------------------


def prepare_layer(layer: LayerGraph, cfg: PipelineConfig) -> LayerGraph:
    if cfg.sample_top_edges is not None:
        layer = sample_top_edges(layer, cfg.sample_top_edges)
    if cfg.sample_node_budget is not None:
        layer = sample_node_budget(layer, cfg.sample_node_budget)
    return layer


def snapshot_spd(snapshot: MultilayerSnapshot, cfg: PipelineConfig) -> StackedPersistenceDiagram:
    """Sample, densify and diagram every layer of one snapshot."""
    blocks = []
    for name, layer in snapshot.layers.items():
        geo = densify(prepare_layer(layer, cfg), name)
        try:
            blocks.append((name, layer_pd(geo, cfg.k_max, cfg.clique_ceiling)))
        except CliqueLimitError as exc:
            raise LayerResourceError(snapshot.time, exc) from exc
    return stack(blocks, snapshot.time)


def _snapshot_digest(snapshot: MultilayerSnapshot, cfg: PipelineConfig) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"format": CACHE_FORMAT, "cfg": cfg.tstep_key()}, sort_keys=True).encode())
    h.update(f"t={snapshot.time}\n".encode())
    for name, layer in snapshot.layers.items():
        h.update(f"layer={name}\n".encode())
        for e in layer.edges:
            h.update(f"{e[0]},{e[1]},{format_float(layer.weights[e])},{format_float(layer.counts[e])}\n".encode())
        for u in sorted(layer.nodes):
            h.update(f"node={u}\n".encode())
    return h.hexdigest()


def _spd_to_json(spd: StackedPersistenceDiagram) -> dict:
    return {
        "time": spd.time,
        "blocks": [
            {"layer": name, "cap": pd.cap, "points": [[b, d, k, int(e)] for b, d, k, e in pd.points()]}
            for name, pd in spd.blocks.items()
        ],
    }


def _spd_from_json(data: dict) -> StackedPersistenceDiagram:
    blocks = []
    for block in data["blocks"]:
        pts = [(b, d, int(k), bool(e)) for b, d, k, e in block["points"]]
        blocks.append((block["layer"], PersistenceDiagram.from_points(pts, block["cap"])))
    return stack(blocks, data["time"])


class SpdCache:
    """On-disk store of stacked diagrams keyed by snapshot content and T-step settings."""

    def __init__(self, root: str | os.PathLike) -> None:
        self.root = Path(root) / "spd"
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0

    def _path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, snapshot: MultilayerSnapshot, cfg: PipelineConfig) -> StackedPersistenceDiagram | None:
        path = self._path(_snapshot_digest(snapshot, cfg))
        if not path.exists():
            return None
        try:
            spd = _spd_from_json(json.loads(path.read_text()))
        except (ValueError, KeyError):
            logger.warning("ignoring unreadable cache entry %s", path.name)
            return None
        self.hits += 1
        return spd

    def put(self, snapshot: MultilayerSnapshot, cfg: PipelineConfig, spd: StackedPersistenceDiagram) -> None:
        path = self._path(_snapshot_digest(snapshot, cfg))
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(_spd_to_json(spd)))
        tmp.replace(path)


def _spd_task(args: tuple[MultilayerSnapshot, PipelineConfig]) -> StackedPersistenceDiagram:
    return snapshot_spd(*args)


def compute_spds(
    graph: TemporalMultilayerGraph,
    cfg: PipelineConfig,
    jobs: int = 1,
    workspace: str | os.PathLike | None = None,
) -> list[StackedPersistenceDiagram]:
    """T-step over all snapshots, in time order regardless of ``jobs``."""
    cache = SpdCache(workspace) if workspace else None
    results: list[StackedPersistenceDiagram | None] = [None] * len(graph)
    todo = []
    for i, snap in enumerate(graph.snapshots):
        hit = cache.get(snap, cfg) if cache else None
        if hit is not None:
            results[i] = hit
        else:
            todo.append(i)
    tasks = [(graph.snapshots[i], cfg) for i in todo]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            computed = list(pool.map(_spd_task, tasks))
    else:
        computed = [_spd_task(t) for t in tasks]
    for i, spd in zip(todo, computed):
        results[i] = spd
        if cache:
            cache.put(graph.snapshots[i], cfg, spd)
    return results  # type: ignore[return-value]


def distance_series(
    spds: list[StackedPersistenceDiagram], distance: DiagramDistance
) -> tuple[list[int], list[float]]:
    """Distances between consecutive diagrams, indexed by the later time."""
    times, dists = [], []
    with warnings.catch_warnings():
        # caps differ between snapshots by construction
        warnings.simplefilter("ignore", CapMismatchWarning)
        for prev, cur in zip(spds, spds[1:]):
            times.append(cur.time)
            dists.append(spd_distance(prev, cur, distance))
    return times, dists


def layer_distance_series(
    spds: list[StackedPersistenceDiagram], distance: DiagramDistance
) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {name: [] for name in spds[0].layer_names} if spds else {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CapMismatchWarning)
        for prev, cur in zip(spds, spds[1:]):
            for name in out:
                out[name].append(diagram_distance(prev.blocks[name], cur.blocks[name], distance))
    return out


# -- AD-step ----------------------------------------------------------------------


def _check_length(graph: TemporalMultilayerGraph, cfg: PipelineConfig) -> None:
    need = 2 * cfg.sesd.period + 1
    if len(graph) < need:
        raise TooFewSnapshotsError(
            f"{len(graph)} snapshots; S-ESD with period {cfg.sesd.period} needs at least {need}"
        )


def _flag_times(times: list[int], dists: list[float], sesd: SesdConfig) -> list[int]:
    found = detect(dists, sesd)
    return sorted(times[i] for i in found.indices)


def run_tad(
    graph: TemporalMultilayerGraph,
    cfg: PipelineConfig | None = None,
    jobs: int = 1,
    workspace: str | os.PathLike | None = None,
    spds: list[StackedPersistenceDiagram] | None = None,
) -> TadResult:
    """Stacked-diagram anomaly detection over the whole multilayer sequence."""
    cfg = cfg or PipelineConfig()
    _check_length(graph, cfg)
    t0 = time.perf_counter()
    if spds is None:
        spds = compute_spds(graph, cfg, jobs, workspace)
    t1 = time.perf_counter()
    times, dists = distance_series(spds, cfg.distance)
    t2 = time.perf_counter()
    anomalies = _flag_times(times, dists, replace(cfg.sesd, alpha=cfg.alpha))
    t3 = time.perf_counter()
    timings = {"t_step": t1 - t0, "distances": t2 - t1, "ad_step": t3 - t2}
    return TadResult(times, dists, anomalies, spds, timings)


def run_stad(
    graph: TemporalMultilayerGraph,
    cfg: PipelineConfig | None = None,
    jobs: int = 1,
    workspace: str | os.PathLike | None = None,
    spds: list[StackedPersistenceDiagram] | None = None,
) -> StadResult:
    """Per-layer detection combined by union or intersection.

    With ``cfg.bonferroni`` each layer is tested at ``alpha / L``.
    """
    cfg = cfg or PipelineConfig(mode=Mode.STAD_UNION)
    _check_length(graph, cfg)
    n_layers = len(graph.layer_names)
    layer_alpha = cfg.alpha / n_layers if cfg.bonferroni else cfg.alpha
    t0 = time.perf_counter()
    if spds is None:
        spds = compute_spds(graph, cfg, jobs, workspace)
    t1 = time.perf_counter()
    times = [s.time for s in spds[1:]]
    per_layer = layer_distance_series(spds, cfg.distance)
    t2 = time.perf_counter()
    sesd = replace(cfg.sesd, alpha=layer_alpha)
    flags = {name: _flag_times(times, series, sesd) for name, series in per_layer.items()}
    mode = Mode.STAD_UNION if cfg.mode is Mode.TAD else cfg.mode
    anomalies = combine(flags.values(), "intersect" if mode is Mode.STAD_INTERSECT else "union")
    t3 = time.perf_counter()
    timings = {"t_step": t1 - t0, "distances": t2 - t1, "ad_step": t3 - t2}
    return StadResult(times, per_layer, flags, anomalies, layer_alpha, spds, timings)


def combine(sets: Iterable[Iterable[int]], mode: str = "union") -> list[int]:
    """Union or intersection of per-layer anomaly sets."""
    sets = [set(s) for s in sets]
    if not sets:
        return []
    if mode == "union":
        out = set().union(*sets)
    elif mode in ("intersect", "intersection"):
        out = set.intersection(*sets)
    else:
        raise ValueError(f"unknown combination mode {mode!r}")
    return sorted(out)


def fwer(alpha_c: float, n_tests: int) -> float:
    """Family-wise error rate of ``n_tests`` independent tests at level ``alpha_c``.

    Evaluated as ``-expm1(n log1p(-alpha_c))`` to avoid the cancellation in
    ``1 - (1 - alpha_c) ** n``.
    """
    if not 0 < alpha_c < 1:
        raise ValueError("alpha_c must lie in (0, 1)")
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    return -math.expm1(n_tests * math.log1p(-alpha_c))


def run(
    graph: TemporalMultilayerGraph,
    cfg: PipelineConfig,
    jobs: int = 1,
    workspace: str | os.PathLike | None = None,
) -> dict:
    """Run the configured mode and return the report payload."""
    if cfg.mode is Mode.TAD:
        res = run_tad(graph, cfg, jobs, workspace)
        report = build_report(cfg, res.times, res.distances, res.anomalies, res.timings)
    else:
        res = run_stad(graph, cfg, jobs, workspace)
        series = {name: list(zip(res.times, d)) for name, d in res.per_layer_distances.items()}
        report = build_report(
            cfg,
            res.times,
            _stack_series(res.per_layer_distances, cfg.distance),
            res.anomalies,
            res.timings,
            per_layer_anomalies=res.per_layer_anomalies,
            per_layer_series=series,
            layer_alpha=res.layer_alpha,
        )
    return report


def _stack_series(per_layer: dict[str, list[float]], distance: DiagramDistance) -> list[float]:
    columns = list(per_layer.values())
    return [aggregate_blocks(list(row), distance) for row in zip(*columns)]


def build_report(
    cfg: PipelineConfig,
    times: list[int],
    distances: list[float],
    anomalies: list[int],
    timings: dict[str, float],
    per_layer_anomalies: dict[str, list[int]] | None = None,
    per_layer_series: dict[str, list[tuple[int, float]]] | None = None,
    layer_alpha: float | None = None,
) -> dict:
    report: dict = {
        "config": cfg.to_dict(),
        "distance_series": [{"t": t, "distance": d} for t, d in zip(times, distances)],
        "anomalies": list(anomalies),
    }
    if per_layer_anomalies is not None:
        report["per_layer_anomalies"] = per_layer_anomalies
        report["layer_alpha"] = layer_alpha
    if per_layer_series is not None:
        report["per_layer_distance_series"] = {
            name: [{"t": t, "distance": d} for t, d in s] for name, s in per_layer_series.items()
        }
    report["timings"] = {k: round(v, 6) for k, v in timings.items()}
    return report
