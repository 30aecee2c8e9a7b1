"""Clique-community persistent homology of weighted graphs.

For each clique size ``k`` the k-clique communities of the threshold graphs
``G_nu = {e : w(e) <= nu}`` are tracked along the sublevel filtration. A
community is born with its first k-clique and dies (elder rule) when it
percolates into an older one. Communities are represented by the (k-1)-faces
of their cliques: two k-cliques share k-1 vertices exactly when they share a
face, so uniting the faces of every clique yields the communities.

The fast path inserts edges in increasing weight order and enumerates only
the cliques closed by each new edge, so cliques arrive already sorted by
filtration value and never need a global sort.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, TextIO, Union

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .geodesic import GeodesicLayer, weight_matrix
from .mlgraph import LayerGraph, format_float

DEFAULT_CLIQUE_CEILING = 50_000_000
# Largest (k-1)-face table the compiled path allocates; beyond it the
# dictionary-backed path is used.
FACE_TABLE_LIMIT = 8_000_000

Graph = Union[LayerGraph, GeodesicLayer]


class CliqueLimitError(RuntimeError):
    """The clique count of a layer exceeded the configured ceiling."""

    def __init__(self, layer: str, count: int, ceiling: int) -> None:
        super().__init__(f"layer {layer or '<unnamed>'!s}: more than {ceiling} cliques (reached {count})")
        self.layer = layer
        self.count = count
        self.ceiling = ceiling


@dataclass(frozen=True)
class KClique:
    vertices: tuple[str, ...]
    filtration_value: float


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """Multiset of ``(birth, death, k)`` points.

    Essential points carry ``essential=True``; their death is ``inf`` until
    the diagram is capped, after which it holds ``cap``.
    """

    births: np.ndarray
    deaths: np.ndarray
    ks: np.ndarray
    essential: np.ndarray
    cap: float | None = None

    def __post_init__(self) -> None:
        for arr in (self.births, self.deaths, self.ks, self.essential):
            arr.setflags(write=False)

    @classmethod
    def from_points(
        cls, points: Iterable[tuple[float, float, int, bool]], cap: float | None = None
    ) -> PersistenceDiagram:
        # canonical order makes equal multisets compare (and serialize) identically
        pts = sorted((int(k), float(b), float(d), bool(e)) for b, d, k, e in points)
        return cls(
            np.array([p[1] for p in pts], dtype=float),
            np.array([p[2] for p in pts], dtype=float),
            np.array([p[0] for p in pts], dtype=np.int64),
            np.array([p[3] for p in pts], dtype=bool),
            cap,
        )

    @classmethod
    def empty(cls) -> PersistenceDiagram:
        return cls.from_points([])

    def __len__(self) -> int:
        return len(self.births)

    def points(self) -> list[tuple[float, float, int, bool]]:
        return [
            (float(b), float(d), int(k), bool(e))
            for b, d, k, e in zip(self.births, self.deaths, self.ks, self.essential)
        ]

    def restrict(self, k: int) -> PersistenceDiagram:
        return PersistenceDiagram.from_points([p for p in self.points() if p[2] == k], self.cap)

    def with_cap(self, cap: float) -> PersistenceDiagram:
        return PersistenceDiagram.from_points(
            [(b, cap if e else d, k, e) for b, d, k, e in self.points()], cap
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.deaths)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.points() == other.points() and self.cap == other.cap

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["k", "birth", "death", "essential"])
        for b, d, k, e in self.points():
            writer.writerow([k, format_float(b), format_float(d), int(e)])

    @classmethod
    def read_csv(cls, stream: TextIO) -> PersistenceDiagram:
        rows = list(csv.DictReader(stream))
        pts = [(float(r["birth"]), float(r["death"]), int(r["k"]), r["essential"] == "1") for r in rows]
        caps = {d for _, d, _, e in pts if e}
        return cls.from_points(pts, caps.pop() if len(caps) == 1 else None)


def _graph_matrix(graph: Graph) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(graph, GeodesicLayer):
        return graph.nodes, np.asarray(graph.dist)
    return weight_matrix(graph)


def _layer_name(graph: Graph) -> str:
    return graph.source_layer if isinstance(graph, GeodesicLayer) else ""


def _sorted_edges(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    i, j = np.triu_indices(len(w), 1)
    vals = w[i, j]
    keep = np.isfinite(vals)
    i, j, vals = i[keep], j[keep], vals[keep]
    order = np.lexsort((j, i, vals))
    return i[order].astype(np.int64), j[order].astype(np.int64), vals[order].astype(float)


def filtration_grid(graph: Graph) -> np.ndarray:
    """Sorted distinct edge weights of ``graph``."""
    _, w = _graph_matrix(graph)
    return np.unique(_sorted_edges(w)[2])


def max_filtration_value(graph: Graph) -> float:
    grid = filtration_grid(graph)
    return float(grid[-1]) if len(grid) else 0.0


# -- clique enumeration -----------------------------------------------------


def _bron_kerbosch(adj: list[set[int]]) -> Iterable[list[int]]:
    stack = [(set(), set(range(len(adj))), set())]
    while stack:
        r, p, x = stack.pop()
        if not p and not x:
            yield sorted(r)
            continue
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in sorted(p - adj[pivot]):
            stack.append((r | {v}, p & adj[v], x & adj[v]))
            p = p - {v}
            x = x | {v}


def enumerate_k_cliques(graph: Graph, k_max: int, ceiling: int = DEFAULT_CLIQUE_CEILING) -> list[KClique]:
    """Every clique of size ``1..k_max`` with its filtration value.

    Maximal cliques of the full graph are found once (Bron-Kerbosch with
    pivoting) and expanded into their sub-cliques.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    nodes, w = _graph_matrix(graph)
    return _enumerate(nodes, w, k_max, ceiling, _layer_name(graph))


def _enumerate(nodes: tuple[str, ...], w: np.ndarray, k_max: int, ceiling: int, layer: str) -> list[KClique]:
    n = len(nodes)
    finite = np.isfinite(w)
    adj = [set(np.flatnonzero(finite[i])) - {i} for i in range(n)]
    seen: set[tuple[int, ...]] = set()
    for clique in _bron_kerbosch(adj):
        for size in range(1, min(k_max, len(clique)) + 1):
            for sub in itertools.combinations(clique, size):
                if sub not in seen:
                    seen.add(sub)
                    if len(seen) > ceiling:
                        raise CliqueLimitError(layer, len(seen), ceiling)
    out = []
    for sub in seen:
        value = max((w[a, b] for a, b in itertools.combinations(sub, 2)), default=0.0)
        out.append(KClique(tuple(nodes[i] for i in sub), float(value)))
    out.sort(key=lambda c: (len(c.vertices), c.filtration_value, c.vertices))
    return out


# -- persistence ---------------------------------------------------------------


def _components_pd(n: int, eu: np.ndarray, ev: np.ndarray, ew: np.ndarray) -> list[tuple[float, float, int, bool]]:
    """Vertices born at 0, merged by edges (k = 1)."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    points = []
    for a, b, w in zip(eu.tolist(), ev.tolist(), ew.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            points.append((0.0, w, 1, False))
    roots = sum(1 for i in range(n) if parent[i] == i)
    points.extend((0.0, math.inf, 1, True) for _ in range(roots))
    return points


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _kclique_kernel(n, eu, ev, ew, k, binom, ceiling):
    nf = binom[n, k - 1]
    parent = np.full(nf, -1, np.int64)
    size = np.zeros(nf, np.int64)
    birth = np.zeros(nf)
    adj = np.zeros((n, n), np.bool_)
    out_b = np.empty(64)
    out_d = np.empty(64)
    n_out = 0
    m = k - 2
    cand = np.empty((max(m, 1), n), np.int64)
    ncand = np.zeros(max(m, 1), np.int64)
    pos = np.zeros(max(m, 1), np.int64)
    sel = np.empty(max(m, 1), np.int64)
    verts = np.empty(k, np.int64)
    faces = np.empty(k, np.int64)
    roots = np.empty(k, np.int64)
    count = 0
    for e in range(len(eu)):
        a = eu[e]
        b = ev[e]
        w = ew[e]
        if m > 0:
            c0 = 0
            for c in range(n):
                if adj[a, c] and adj[b, c]:
                    cand[0, c0] = c
                    c0 += 1
            ncand[0] = c0
            pos[0] = 0
            d = 0
        else:
            d = -1
        emit_pair = m == 0
        while emit_pair or d >= 0:
            if m > 0:
                if ncand[d] - pos[d] < m - d:
                    d -= 1
                    if d >= 0:
                        pos[d] += 1
                    continue
                sel[d] = cand[d, pos[d]]
                if d < m - 1:
                    v = sel[d]
                    cnt = 0
                    for q in range(pos[d] + 1, ncand[d]):
                        x = cand[d, q]
                        if adj[v, x]:
                            cand[d + 1, cnt] = x
                            cnt += 1
                    ncand[d + 1] = cnt
                    d += 1
                    pos[d] = 0
                    continue
                pos[d] += 1
            emit_pair = False
            # clique {a, b} + sel[:m], sorted into verts
            verts[0] = a
            verts[1] = b
            for q in range(m):
                verts[2 + q] = sel[q]
            for q in range(1, k):
                x = verts[q]
                r = q - 1
                while r >= 0 and verts[r] > x:
                    verts[r + 1] = verts[r]
                    r -= 1
                verts[r + 1] = x
            count += 1
            if count > ceiling:
                return 1, count, out_b[:n_out], out_d[:n_out], np.empty(0)
            nroots = 0
            for i in range(k):
                r = 0
                jj = 0
                for q in range(k):
                    if q != i:
                        jj += 1
                        r += binom[verts[q], jj]
                faces[i] = r
                if parent[r] != -1:
                    root = _find(parent, r)
                    dup = False
                    for q in range(nroots):
                        if roots[q] == root:
                            dup = True
                    if not dup:
                        roots[nroots] = root
                        nroots += 1
            if nroots == 0:
                top = faces[0]
                parent[top] = top
                size[top] = 0
                birth[top] = w
            else:
                surv = roots[0]
                for q in range(1, nroots):
                    r = roots[q]
                    if birth[r] < birth[surv] or (birth[r] == birth[surv] and r < surv):
                        surv = r
                eldest = birth[surv]
                top = surv
                for q in range(nroots):
                    r = roots[q]
                    if r == surv:
                        continue
                    if birth[r] < w:
                        if n_out == len(out_b):
                            nb = np.empty(2 * n_out)
                            nd = np.empty(2 * n_out)
                            nb[:n_out] = out_b
                            nd[:n_out] = out_d
                            out_b = nb
                            out_d = nd
                        out_b[n_out] = birth[r]
                        out_d[n_out] = w
                        n_out += 1
                    if size[r] > size[top]:
                        parent[top] = r
                        size[r] += size[top] + 1
                        top = r
                    else:
                        parent[r] = top
                        size[top] += size[r] + 1
                birth[top] = eldest
            for i in range(k):
                r = faces[i]
                if parent[r] == -1:
                    parent[r] = top
                    size[top] += 1
        adj[a, b] = True
        adj[b, a] = True
    n_ess = 0
    for r in range(nf):
        if parent[r] == r:
            n_ess += 1
    ess = np.empty(n_ess)
    q = 0
    for r in range(nf):
        if parent[r] == r:
            ess[q] = birth[r]
            q += 1
    return 0, count, out_b[:n_out], out_d[:n_out], ess


def _binomial_table(n: int, k: int) -> np.ndarray:
    table = np.zeros((n + 1, k + 1), dtype=np.int64)
    for c in range(n + 1):
        for j in range(k + 1):
            table[c, j] = math.comb(c, j)
    return table


def _community_pd_compiled(
    n: int, edges: tuple[np.ndarray, np.ndarray, np.ndarray], k: int, ceiling: int, layer: str
) -> tuple[list[tuple[float, float, int, bool]], int]:
    eu, ev, ew = edges
    status, count, db, dd, ess = _kclique_kernel(n, eu, ev, ew, k, _binomial_table(n, k), ceiling)
    if status:
        raise CliqueLimitError(layer, count, ceiling)
    points = [(b, d, k, False) for b, d in zip(db.tolist(), dd.tolist())]
    points.extend((b, math.inf, k, True) for b in ess.tolist())
    return points, count


def _community_pd_reference(
    nodes: tuple[str, ...], w: np.ndarray, k: int, ceiling: int, layer: str
) -> tuple[list[tuple[float, float, int, bool]], int]:
    """Dictionary-backed union-find over faces of enumerated k-cliques."""
    cliques = [c for c in _enumerate(nodes, w, k, ceiling, layer) if len(c.vertices) == k]
    cliques.sort(key=lambda c: (c.filtration_value, c.vertices))
    parent: dict[tuple[str, ...], tuple[str, ...]] = {}
    birth: dict[tuple[str, ...], float] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    points = []
    for clique in cliques:
        w = clique.filtration_value
        faces = [clique.vertices[:i] + clique.vertices[i + 1:] for i in range(k)]
        roots = sorted({find(f) for f in faces if f in parent}, key=lambda r: (birth[r], r))
        if roots:
            top = roots[0]
            for r in roots[1:]:
                if birth[r] < w:
                    points.append((birth[r], w, k, False))
                parent[r] = top
        else:
            top = faces[0]
            parent[top] = top
            birth[top] = w
        for f in faces:
            parent.setdefault(f, top)
    points.extend((birth[r], math.inf, k, True) for r in parent if parent[r] == r)
    return points, len(cliques)


def clique_community_pd(graph: Graph, k: int, ceiling: int = DEFAULT_CLIQUE_CEILING) -> PersistenceDiagram:
    """Persistence of k-clique communities along the weight filtration.

    For ``k = 1`` the communities are the connected components (every vertex
    born at 0). Essential classes are returned with ``death = inf``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    points, _ = _community_points(_Prepared.of(graph), k, ceiling)
    return PersistenceDiagram.from_points(points)


@dataclass
class _Component:
    nodes: tuple[str, ...]
    w: np.ndarray
    complete: bool
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class _Prepared:
    """A layer's matrix split into connected components, built once per layer."""

    layer: str
    n: int
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]
    components: list[_Component]

    @classmethod
    def of(cls, graph: Graph) -> _Prepared:
        nodes, w = _graph_matrix(graph)
        finite = np.isfinite(w)
        np.fill_diagonal(finite, False)
        count, labels = connected_components(csr_matrix(finite), directed=False)
        comps = []
        for c in range(count):
            idx = np.flatnonzero(labels == c)
            if len(idx) < 2:
                continue
            sub = w[np.ix_(idx, idx)]
            comps.append(_Component(tuple(nodes[i] for i in idx), sub, bool(np.isfinite(sub).all()),
                                    _sorted_edges(sub)))
        return cls(_layer_name(graph), len(nodes), _sorted_edges(w), comps)

    def complete_clique_count(self, k_max: int) -> int:
        total = 0
        for comp in self.components:
            if comp.complete:
                m = len(comp.nodes)
                total += sum(math.comb(m, k) for k in range(2, min(k_max, m) + 1))
        return total


def _community_points(prep: _Prepared, k: int, ceiling: int) -> tuple[list[tuple[float, float, int, bool]], int]:
    if k == 1:
        return _components_pd(prep.n, *prep.edges), prep.n
    # cliques and their communities never straddle components, so each
    # component is handled alone against what is left of the budget
    points: list[tuple[float, float, int, bool]] = []
    used = 0
    for comp in prep.components:
        m = len(comp.nodes)
        if m < k:
            continue
        budget = ceiling - used
        if comp.complete and math.comb(m, k) > budget:
            raise CliqueLimitError(prep.layer, used + math.comb(m, k), ceiling)
        if math.comb(m, k - 1) <= FACE_TABLE_LIMIT:
            pts, count = _community_pd_compiled(m, comp.edges, k, budget, prep.layer)
        else:
            pts, count = _community_pd_reference(comp.nodes, comp.w, k, budget, prep.layer)
        points.extend(pts)
        used += count
    return points, used


def layer_pd(graph: Graph, k_max: int, ceiling: int = DEFAULT_CLIQUE_CEILING) -> PersistenceDiagram:
    """Clique-community diagram for ``k = 1..k_max`` with capped essential deaths.

    Essential classes die at the layer's largest filtration value; the cap is
    recorded on the diagram. Zero-persistence finite points are dropped.
    Complete components make the clique count known up front, so a layer
    that cannot fit in ``ceiling`` fails before any work is done.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    prep = _Prepared.of(graph)
    known = prep.complete_clique_count(k_max)
    if known > ceiling:
        raise CliqueLimitError(prep.layer, known, ceiling)
    cap = float(prep.edges[2][-1]) if len(prep.edges[2]) else 0.0
    points = []
    budget = ceiling
    for k in range(1, k_max + 1):
        pts, used = _community_points(prep, k, budget if k > 1 else ceiling)
        if k > 1:
            budget -= used
        points.extend(pts)
    points = [(b, cap if e else d, k, e) for b, d, k, e in points if e or b < d]
    return PersistenceDiagram.from_points(points, cap)
