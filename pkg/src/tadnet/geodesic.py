"""Geodesic densification of layer graphs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .mlgraph import LayerGraph, MultilayerSnapshot, format_float


@dataclass(frozen=True, eq=False)
class GeodesicLayer:
    """All-pairs shortest-path distances of one layer.

    ``dist`` is a dense symmetric matrix indexed like ``nodes``; disconnected
    pairs hold ``inf`` and the diagonal is 0. Only finite off-diagonal entries
    count as stored pairs.
    """

    nodes: tuple[str, ...]
    dist: np.ndarray
    source_layer: str = ""

    def __post_init__(self) -> None:
        self.dist.setflags(write=False)

    @property
    def n_pairs(self) -> int:
        iu = np.triu_indices(len(self.nodes), 1)
        return int(np.isfinite(self.dist[iu]).sum())

    def distance(self, u: str, v: str) -> float | None:
        i, j = self.nodes.index(u), self.nodes.index(v)
        d = self.dist[i, j]
        return float(d) if np.isfinite(d) and i != j else None

    def entries(self) -> dict[tuple[str, str], float]:
        n = len(self.nodes)
        out = {}
        for i in range(n):
            for j in range(i + 1, n):
                d = self.dist[i, j]
                if np.isfinite(d):
                    out[(self.nodes[i], self.nodes[j])] = float(d)
        return out

    def as_layer_graph(self) -> LayerGraph:
        return LayerGraph.from_weights(self.entries(), self.nodes)

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["u", "v", "dist"])
        for (u, v), d in self.entries().items():
            writer.writerow([u, v, format_float(d)])


def weight_matrix(layer: LayerGraph) -> tuple[tuple[str, ...], np.ndarray]:
    """Dense weight matrix (``inf`` off-edge, 0 on the diagonal)."""
    nodes = tuple(sorted(layer.nodes))
    index = {u: i for i, u in enumerate(nodes)}
    w = np.full((len(nodes), len(nodes)), np.inf)
    np.fill_diagonal(w, 0.0)
    for (u, v), x in layer.weights.items():
        i, j = index[u], index[v]
        w[i, j] = w[j, i] = x
    return nodes, w


def densify(layer: LayerGraph, name: str = "") -> GeodesicLayer:
    """Replace edge weights by shortest-path distances between connected pairs."""
    nodes = tuple(sorted(layer.nodes))
    n = len(nodes)
    if n == 0:
        return GeodesicLayer((), np.zeros((0, 0)), name)
    index = {u: i for i, u in enumerate(nodes)}
    rows, cols, vals = [], [], []
    for (u, v), x in layer.weights.items():
        rows.append(index[u])
        cols.append(index[v])
        vals.append(x)
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    dist = dijkstra(graph, directed=False)
    # symmetrize exactly: both triangles must hold bit-identical values
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return GeodesicLayer(nodes, dist, name)


def densify_snapshot(snapshot: MultilayerSnapshot) -> list[GeodesicLayer]:
    return [densify(layer, name) for name, layer in snapshot.layers.items()]
