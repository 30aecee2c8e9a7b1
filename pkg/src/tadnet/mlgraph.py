"""Temporal multilayer graphs: data model, edge-list ingestion and sampling."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

logger = logging.getLogger(__name__)

EDGE_HEADER = ["t", "layer", "src", "dst", "weight"]

Edge = tuple[str, str]


class IngestionError(ValueError):
    """Raised for malformed edge-list input."""


class TransformKind(str, enum.Enum):
    IDENTITY = "identity"
    RECIPROCAL = "reciprocal-of-normalized"
    ONE_MINUS = "one-minus-normalized"
    UNWEIGHTED = "unweighted"


class NormalizationScope(str, enum.Enum):
    SNAPSHOT_LAYER = "per-snapshot-layer"
    GLOBAL_LAYER = "global-per-layer"


@dataclass(frozen=True)
class WeightTransform:
    kind: TransformKind = TransformKind.RECIPROCAL
    scope: NormalizationScope = NormalizationScope.SNAPSHOT_LAYER

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TransformKind(self.kind))
        object.__setattr__(self, "scope", NormalizationScope(self.scope))


def edge_key(u: str, v: str) -> Edge:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class LayerGraph:
    """Undirected simple weighted graph for one layer at one time.

    ``counts`` holds the raw (aggregated) activity of every edge and
    ``weights`` the transformed filtration values. Edges are stored as
    lexicographically ordered node pairs.
    """

    nodes: frozenset[str]
    counts: Mapping[Edge, float]
    weights: Mapping[Edge, float]

    def __post_init__(self) -> None:
        if set(self.counts) != set(self.weights):
            raise ValueError("counts and weights must cover the same edges")
        for (u, v), w in self.weights.items():
            if u >= v:
                raise ValueError(f"edge ({u!r}, {v!r}) is not canonical or is a self-loop")
            if u not in self.nodes or v not in self.nodes:
                raise ValueError(f"edge ({u!r}, {v!r}) has an endpoint outside the node set")
            if not (math.isfinite(w) and w > 0):
                raise ValueError(f"edge ({u!r}, {v!r}) has invalid weight {w!r}")

    @classmethod
    def from_weights(cls, weights: Mapping[tuple[str, str], float], nodes: Iterable[str] = ()) -> LayerGraph:
        """Build a layer whose raw counts equal its weights."""
        w = {edge_key(u, v): float(x) for (u, v), x in weights.items()}
        allnodes = set(nodes)
        for u, v in w:
            allnodes.update((u, v))
        return cls(frozenset(allnodes), dict(w), dict(w))

    @classmethod
    def empty(cls) -> LayerGraph:
        return cls(frozenset(), {}, {})

    @property
    def edges(self) -> list[Edge]:
        return sorted(self.weights)

    def __len__(self) -> int:
        return len(self.weights)

    def induced(self, keep: Iterable[str]) -> LayerGraph:
        keep = frozenset(keep)
        edges = [e for e in self.weights if e[0] in keep and e[1] in keep]
        return LayerGraph(
            keep,
            {e: self.counts[e] for e in edges},
            {e: self.weights[e] for e in edges},
        )


@dataclass(frozen=True)
class MultilayerSnapshot:
    time: int
    layers: dict[str, LayerGraph]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("a snapshot needs at least one layer")

    @property
    def layer_names(self) -> list[str]:
        return list(self.layers)


@dataclass(frozen=True)
class TemporalMultilayerGraph:
    snapshots: list[MultilayerSnapshot]
    layer_names: list[str]
    warnings: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        times = [s.time for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        for s in self.snapshots:
            if s.layer_names != self.layer_names:
                raise ValueError(f"snapshot {s.time} does not expose the canonical layers")

    @property
    def times(self) -> list[int]:
        return [s.time for s in self.snapshots]

    def __len__(self) -> int:
        return len(self.snapshots)

    def snapshot(self, t: int) -> MultilayerSnapshot:
        for s in self.snapshots:
            if s.time == t:
                return s
        raise KeyError(t)

    def select_layers(self, names: Iterable[str]) -> TemporalMultilayerGraph:
        names = list(names)
        snaps = [MultilayerSnapshot(s.time, {n: s.layers[n] for n in names}) for s in self.snapshots]
        return TemporalMultilayerGraph(snaps, names)


def apply_weight_transform(
    layer: LayerGraph, transform: WeightTransform, max_count: float | None = None
) -> LayerGraph:
    """Recompute filtration weights from the raw counts of ``layer``.

    ``max_count`` overrides the normalizer (used for global-per-layer scope);
    by default it is the largest count in the layer itself.
    """
    counts = layer.counts
    bad = [e for e, c in counts.items() if not c > 0]
    if bad:
        raise ValueError(f"non-positive raw count on edge {bad[0]}")
    kind = transform.kind
    if kind is TransformKind.IDENTITY:
        weights = {e: float(c) for e, c in counts.items()}
    elif kind is TransformKind.UNWEIGHTED:
        weights = {e: 1.0 for e in counts}
    else:
        top = max(counts.values(), default=1.0) if max_count is None else max_count
        if kind is TransformKind.RECIPROCAL:
            weights = {e: top / c for e, c in counts.items()}
        else:
            weights = {e: 1.0 - c / (top + 1.0) for e, c in counts.items()}
    return LayerGraph(layer.nodes, dict(counts), weights)


def _parse_rows(stream: TextIO) -> Iterable[tuple[int, list[str]]]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestionError("no records") from None
    if [h.strip() for h in header] != EDGE_HEADER:
        raise IngestionError(f"line 1: expected header {','.join(EDGE_HEADER)}, got {','.join(header)}")
    for row in reader:
        if not row:
            continue
        yield reader.line_num, row


def ingest_edge_list(stream: TextIO, transform: WeightTransform | None = None) -> TemporalMultilayerGraph:
    """Read a ``t,layer,src,dst,weight`` CSV into a temporal multilayer graph.

    Records sharing ``(t, layer, {src, dst})`` are summed, self-loops are
    dropped (counted in ``graph.warnings["self_loops"]``).
    """
    transform = transform or WeightTransform()
    unweighted = transform.kind is TransformKind.UNWEIGHTED
    raw: dict[int, dict[str, dict[Edge, float]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(float)))
    layer_order: dict[str, None] = {}
    self_loops = 0
    n_records = 0
    for lineno, row in _parse_rows(stream):
        if len(row) != 5:
            raise IngestionError(f"line {lineno}: expected 5 fields, got {len(row)}")
        t_s, layer, src, dst, w_s = (x.strip() for x in row)
        try:
            t = int(t_s)
        except ValueError:
            raise IngestionError(f"line {lineno}: time {t_s!r} is not an integer") from None
        if t < 0:
            raise IngestionError(f"line {lineno}: negative time {t}")
        if not layer or not src or not dst:
            raise IngestionError(f"line {lineno}: empty layer or node identifier")
        try:
            w = float(w_s)
            valid = math.isfinite(w) and w > 0
        except ValueError:
            w, valid = 1.0, False
        if not valid:
            if not unweighted:
                raise IngestionError(f"line {lineno}: weight {w_s!r} is not a positive number")
            w = 1.0
        n_records += 1
        layer_order.setdefault(layer, None)
        if src == dst:
            self_loops += 1
            continue
        raw[t][layer][edge_key(src, dst)] += w
    if n_records == 0:
        raise IngestionError("no records")
    if self_loops:
        logger.warning("dropped %d self-loop record(s)", self_loops)
    graph = build_temporal_graph(raw, transform, layer_names=sorted(layer_order))
    graph.warnings["self_loops"] = self_loops
    return graph


def build_temporal_graph(
    raw: Mapping[int, Mapping[str, Mapping[Edge, float]]],
    transform: WeightTransform,
    layer_names: list[str] | None = None,
) -> TemporalMultilayerGraph:
    """Assemble a graph from ``raw[t][layer][edge] = count``."""
    if layer_names is None:
        layer_names = sorted({name for layers in raw.values() for name in layers})
    global_max: dict[str, float] = {}
    if transform.scope is NormalizationScope.GLOBAL_LAYER:
        for layers in raw.values():
            for name, edges in layers.items():
                if edges:
                    global_max[name] = max(global_max.get(name, 0.0), max(edges.values()))
    snapshots = []
    for t in sorted(raw):
        layers = {}
        for name in layer_names:
            counts = {edge_key(*e): float(c) for e, c in raw[t].get(name, {}).items()}
            nodes = frozenset(x for e in counts for x in e)
            layer = LayerGraph(nodes, counts, dict(counts))
            layers[name] = apply_weight_transform(layer, transform, global_max.get(name))
        snapshots.append(MultilayerSnapshot(t, layers))
    return TemporalMultilayerGraph(snapshots, list(layer_names))


def write_edge_list(graph: TemporalMultilayerGraph, stream: TextIO) -> None:
    """Serialize raw counts in the ingestion format (17 significant digits)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EDGE_HEADER)
    for snap in graph.snapshots:
        for name in graph.layer_names:
            layer = snap.layers[name]
            for u, v in layer.edges:
                writer.writerow([snap.time, name, u, v, format_float(layer.counts[(u, v)])])


def edge_list_text(graph: TemporalMultilayerGraph) -> str:
    buf = io.StringIO()
    write_edge_list(graph, buf)
    return buf.getvalue()


def format_float(x: float) -> str:
    if isinstance(x, float) and x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return format(x, ".17g")


def _by_activity(layer: LayerGraph) -> list[Edge]:
    return sorted(layer.weights, key=lambda e: (-layer.counts[e], e))


def sample_top_edges(layer: LayerGraph, p: int) -> LayerGraph:
    """Induced subgraph on the endpoints of the ``p`` most active edges."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if len(layer) <= p:
        return layer
    keep: set[str] = set()
    for u, v in _by_activity(layer)[:p]:
        keep.update((u, v))
    return layer.induced(keep)


def sample_node_budget(layer: LayerGraph, budget: int) -> LayerGraph:
    """Greedy node-capped variant of :func:`sample_top_edges`.

    Edges are taken in decreasing activity until the next one would push the
    kept node set above ``budget``.
    """
    if budget < 1:
        raise ValueError("node budget must be >= 1")
    if len(layer.nodes) <= budget:
        return layer
    keep: set[str] = set()
    for u, v in _by_activity(layer):
        extra = (u not in keep) + (v not in keep)
        if len(keep) + extra > budget:
            break
        keep.update((u, v))
    return layer.induced(keep)
