"""Synthetic multilayer benchmarks and windowed detection scoring."""

from __future__ import annotations

import csv
import enum
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .mlgraph import (
    Edge,
    NormalizationScope,
    TemporalMultilayerGraph,
    TransformKind,
    WeightTransform,
    build_temporal_graph,
    edge_key,
)

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


class AnomalyType(str, enum.Enum):
    SHOCK = "shock"
    REGIME_CHANGE = "regime-change"
    CLIQUE_PLANT = "clique-plant"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a Chung-Lu multilayer sequence with one planted anomaly.

    ``mean_degree`` sets the expected degree sequence (power law with
    exponent ``degree_exponent`` on node rank). ``magnitude`` multiplies
    edge probabilities for shocks and regime changes and is the clique size
    for ``clique-plant``. ``affected_layers`` lists 0-based layer indices;
    empty means every layer.
    """

    layers: int = 3
    T: int = 100
    nodes: int = 60
    mean_degree: float = 0.35
    degree_exponent: float = 0.3
    anomaly: AnomalyType = AnomalyType.SHOCK
    at: int = 50
    magnitude: float = 3.0
    affected_layers: tuple[int, ...] = ()
    mean_count: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "anomaly", AnomalyType(self.anomaly))
        object.__setattr__(self, "affected_layers", tuple(self.affected_layers))
        if self.layers < 1 or self.T < 1 or self.nodes < 2:
            raise ValueError("layers, T must be >= 1 and nodes >= 2")
        if not 1 <= self.at <= self.T:
            raise ValueError(f"anomaly time {self.at} outside [1, {self.T}]")
        if self.mean_degree <= 0 or self.magnitude <= 0 or self.mean_count < 0:
            raise ValueError("mean_degree and magnitude must be positive, mean_count non-negative")
        if self.anomaly is AnomalyType.CLIQUE_PLANT and not 2 <= self.magnitude <= self.nodes:
            raise ValueError("clique-plant magnitude is a clique size in [2, nodes]")
        if any(not 0 <= i < self.layers for i in self.affected_layers):
            raise ValueError("affected layer index out of range")

    @property
    def layer_names(self) -> list[str]:
        return [f"L{i + 1}" for i in range(self.layers)]

    @property
    def node_names(self) -> list[str]:
        width = len(str(self.nodes - 1))
        return [f"v{i:0{width}d}" for i in range(self.nodes)]


@dataclass(frozen=True)
class GroundTruth:
    events: tuple[int, ...]
    window: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(sorted(set(self.events))))
        if self.window < 0:
            raise ValueError("window must be non-negative")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> ConfusionMatrix:
        total = tp + fp + tn + fn
        accuracy = (tp + tn) / total if total else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, tn, fn, accuracy, precision, recall, f1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticRun:
    graph: TemporalMultilayerGraph
    truth: GroundTruth
    raw: dict[int, dict[str, dict[Edge, float]]] = field(repr=False)
    metadata: dict = field(default_factory=dict)


def _expected_degrees(spec: SyntheticSpec) -> np.ndarray:
    ranks = np.arange(1, spec.nodes + 1, dtype=float)
    w = ranks ** -spec.degree_exponent
    return w * (spec.mean_degree * spec.nodes / w.sum())


def simulate(spec: SyntheticSpec, transform: WeightTransform | None = None) -> SyntheticRun:
    """Draw a temporal multilayer graph with one planted anomaly at ``spec.at``.

    Every snapshot redraws each layer from the same Chung-Lu model over a
    persistent node set; raw counts are ``1 + Poisson(mean_count)``.
    """
    transform = transform or WeightTransform(TransformKind.RECIPROCAL, NormalizationScope.SNAPSHOT_LAYER)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    names = spec.node_names
    degrees = _expected_degrees(spec)
    base_p = np.minimum(1.0, np.outer(degrees, degrees) / degrees.sum())
    iu, ju = np.triu_indices(spec.nodes, 1)
    affected = set(spec.affected_layers or range(spec.layers))
    raw: dict[int, dict[str, dict[Edge, float]]] = {}
    for t in range(1, spec.T + 1):
        raw[t] = {}
        for li, layer in enumerate(spec.layer_names):
            scale = 1.0
            if li in affected:
                if spec.anomaly is AnomalyType.SHOCK and t == spec.at:
                    scale = spec.magnitude
                elif spec.anomaly is AnomalyType.REGIME_CHANGE and t >= spec.at:
                    scale = spec.magnitude
            p = np.minimum(1.0, base_p[iu, ju] * scale)
            hit = rng.random(len(p)) < p
            counts = 1 + rng.poisson(spec.mean_count, size=int(hit.sum()))
            edges = {
                (names[a], names[b]): float(c)
                for a, b, c in zip(iu[hit].tolist(), ju[hit].tolist(), counts.tolist())
            }
            if spec.anomaly is AnomalyType.CLIQUE_PLANT and t == spec.at and li in affected:
                members = sorted(rng.choice(spec.nodes, size=int(spec.magnitude), replace=False).tolist())
                for a, b in itertools.combinations(members, 2):
                    key = edge_key(names[a], names[b])
                    edges[key] = edges.get(key, 0.0) + float(1 + rng.poisson(spec.mean_count))
            raw[t][layer] = edges
    graph = build_temporal_graph(raw, transform, layer_names=spec.layer_names)
    meta = {"rng": RNG_ALGORITHM, "numpy": np.__version__, "spec": _spec_dict(spec)}
    return SyntheticRun(graph, GroundTruth((spec.at,)), raw, meta)


def _spec_dict(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d["anomaly"] = spec.anomaly.value
    d["affected_layers"] = list(spec.affected_layers)
    return d


def write_events(truth: GroundTruth, stream: TextIO, label: str = "event") -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t", "label"])
    for t in truth.events:
        writer.writerow([t, label])


def read_events(stream: TextIO, window: int = 2) -> GroundTruth:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or "t" not in reader.fieldnames:
        raise ValueError("events CSV needs a 't' column")
    return GroundTruth(tuple(int(row["t"]) for row in reader), window)


def read_predictions(stream: TextIO) -> list[int]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or "t" not in reader.fieldnames:
        raise ValueError("predictions CSV needs a 't' column")
    return sorted({int(row["t"]) for row in reader})


def write_predictions(times: Iterable[int], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t"])
    for t in sorted(set(times)):
        writer.writerow([t])


def match_events(predicted: Iterable[int], truth: GroundTruth) -> list[tuple[int, int]]:
    """One-to-one event/prediction pairs within the detection window.

    Events are visited chronologically and each takes the earliest
    unconsumed prediction inside ``[t - m, t + m]``. Since all windows have
    the same width this yields a maximum matching.
    """
    preds = sorted(set(predicted))
    used = [False] * len(preds)
    pairs = []
    m = truth.window
    for t in truth.events:
        for i, p in enumerate(preds):
            if not used[i] and t - m <= p <= t + m:
                used[i] = True
                pairs.append((t, p))
                break
    return pairs


def evaluate(predicted: Iterable[int], truth: GroundTruth, T: int) -> ConfusionMatrix:
    """Windowed confusion matrix over ``T`` time points."""
    preds = sorted(set(predicted))
    tp = len(match_events(preds, truth))
    fp = len(preds) - tp
    fn = len(truth.events) - tp
    tn = max(0, T - tp - fp - fn)
    return ConfusionMatrix.from_counts(tp, fp, tn, fn)


def metrics_json(cm: ConfusionMatrix) -> str:
    return json.dumps(cm.to_dict(), indent=2, sort_keys=True) + "\n"
