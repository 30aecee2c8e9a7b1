"""Stacked persistence diagrams and bottleneck / Wasserstein distances."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .cliqueph import PersistenceDiagram


class CapMismatchWarning(UserWarning):
    """Two diagrams with different essential-death caps were compared."""


class DistanceKind(str, enum.Enum):
    BOTTLENECK = "bottleneck"
    WASSERSTEIN = "wasserstein"


@dataclass(frozen=True)
class DiagramDistance:
    kind: DistanceKind = DistanceKind.WASSERSTEIN
    r: float = 1.0
    match_across_k: bool = False
    pooled: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        if self.kind is DistanceKind.WASSERSTEIN and not self.r >= 1:
            raise ValueError(f"Wasserstein order must be >= 1, got {self.r}")

    @classmethod
    def parse(cls, name: str, **kw) -> DiagramDistance:
        """``w1``, ``w2``, ``wr`` with a numeric suffix, or ``bottleneck``."""
        name = name.lower()
        if name in ("bottleneck", "winf", "w_inf"):
            return cls(DistanceKind.BOTTLENECK, **kw)
        if name.startswith("w"):
            return cls(DistanceKind.WASSERSTEIN, float(name[1:]), **kw)
        raise ValueError(f"unknown distance {name!r}")

    @property
    def label(self) -> str:
        if self.kind is DistanceKind.BOTTLENECK:
            return "bottleneck"
        return f"w{self.r:g}"


@dataclass(frozen=True)
class StackedPersistenceDiagram:
    """Layer-tagged direct sum of per-layer diagrams for one snapshot."""

    time: int
    blocks: dict[str, PersistenceDiagram]

    @property
    def layer_names(self) -> list[str]:
        return list(self.blocks)

    def __len__(self) -> int:
        return sum(len(d) for d in self.blocks.values())

    def pooled(self) -> PersistenceDiagram:
        pts = [p for d in self.blocks.values() for p in d.points()]
        return PersistenceDiagram.from_points(pts)


def stack(pds: Iterable[tuple[str, PersistenceDiagram]], time: int) -> StackedPersistenceDiagram:
    blocks: dict[str, PersistenceDiagram] = {}
    for name, pd in pds:
        if name in blocks:
            raise ValueError(f"duplicate layer {name!r}")
        blocks[name] = pd
    return StackedPersistenceDiagram(time, blocks)


def _coords(pd: PersistenceDiagram, k: int | None) -> np.ndarray:
    if k is None:
        mask = np.ones(len(pd), dtype=bool)
    else:
        mask = pd.ks == k
    return np.column_stack([pd.births[mask], pd.deaths[mask]]).reshape(-1, 2)


def _pair_costs(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """L-inf point distances and distances to the diagonal."""
    cross = np.maximum(
        np.abs(a[:, None, 0] - b[None, :, 0]),
        np.abs(a[:, None, 1] - b[None, :, 1]),
    )
    return cross, (a[:, 1] - a[:, 0]) / 2, (b[:, 1] - b[:, 0]) / 2


def wasserstein_points(a: np.ndarray, b: np.ndarray, r: float = 1.0) -> float:
    """Exact ``W_r`` between two finite point sets (rows are birth, death)."""
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        return 0.0
    cross, diag_a, diag_b = _pair_costs(a, b)
    cost = np.zeros((n + m, n + m))
    cost[:n, :m] = cross**r
    cost[:n, m:] = (diag_a**r)[:, None]
    cost[n:, :m] = (diag_b**r)[None, :]
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return total ** (1.0 / r)


def _perfect_matching_within(cross: np.ndarray, diag_a: np.ndarray, diag_b: np.ndarray, eps: float) -> bool:
    # left: points of a, then one diagonal slot per point of b
    # right: points of b, then one diagonal slot per point of a
    n, m = cross.shape
    ri, ci = np.nonzero(cross <= eps)
    rows = [ri, np.flatnonzero(diag_a <= eps), n + np.flatnonzero(diag_b <= eps)]
    cols = [ci, m + np.flatnonzero(diag_a <= eps), np.flatnonzero(diag_b <= eps)]
    dr, dc = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    rows.append(n + dr.ravel())
    cols.append(m + dc.ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = csr_matrix((np.ones(len(r)), (r, c)), shape=(n + m, n + m))
    matching = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(matching >= 0))


def bottleneck_points(a: np.ndarray, b: np.ndarray) -> float:
    """Exact bottleneck distance between two finite point sets."""
    if len(a) == 0 and len(b) == 0:
        return 0.0
    cross, diag_a, diag_b = _pair_costs(a, b)
    candidates = np.unique(np.concatenate([cross.ravel(), diag_a, diag_b, [0.0]]))
    lo, hi = 0, len(candidates) - 1
    # the largest candidate always admits the all-diagonal matching
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_within(cross, diag_a, diag_b, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def _check_caps(a: PersistenceDiagram, b: PersistenceDiagram) -> None:
    if a.cap is not None and b.cap is not None and a.cap != b.cap:
        warnings.warn(
            f"comparing diagrams with essential caps {a.cap!r} and {b.cap!r}",
            CapMismatchWarning,
            stacklevel=3,
        )


def _per_k(a: PersistenceDiagram, b: PersistenceDiagram, d: DiagramDistance) -> list[float]:
    if not (a.is_finite() and b.is_finite()):
        raise ValueError("diagrams must have finite deaths; cap essential classes first")
    if d.match_across_k:
        groups: list[int | None] = [None]
    else:
        groups = sorted(set(a.ks.tolist()) | set(b.ks.tolist()))
    out = []
    for k in groups:
        pa, pb = _coords(a, k), _coords(b, k)
        if d.kind is DistanceKind.BOTTLENECK:
            out.append(bottleneck_points(pa, pb))
        else:
            out.append(wasserstein_points(pa, pb, d.r))
    return out


def aggregate_blocks(parts: list[float], d: DiagramDistance) -> float:
    """Combine independent per-block distances (max, or the r-norm)."""
    if not parts:
        return 0.0
    if len(parts) == 1:
        return parts[0]
    if d.kind is DistanceKind.BOTTLENECK:
        return max(parts)
    if d.r == 1:
        return math.fsum(parts)
    return math.fsum(x**d.r for x in parts) ** (1.0 / d.r)


def diagram_distance(a: PersistenceDiagram, b: PersistenceDiagram, d: DiagramDistance | None = None) -> float:
    """Bottleneck or ``W_r`` distance with the L-inf ground metric.

    Unless ``d.match_across_k`` is set, points only match points with the same
    clique size; the per-size optima are combined like independent blocks.
    """
    d = d or DiagramDistance()
    _check_caps(a, b)
    return aggregate_blocks(_per_k(a, b, d), d)


def spd_distance(
    a: StackedPersistenceDiagram, b: StackedPersistenceDiagram, d: DiagramDistance | None = None
) -> float:
    """Blockwise distance between stacked diagrams.

    Bottleneck takes the maximum over layers, ``W_r`` the r-norm of the
    per-layer distances. With ``d.pooled`` all blocks are merged into a single
    diagram first.
    """
    d = d or DiagramDistance()
    if set(a.blocks) != set(b.blocks):
        raise ValueError(f"layer mismatch: {sorted(a.blocks)} vs {sorted(b.blocks)}")
    if d.pooled:
        return diagram_distance(a.pooled(), b.pooled(), d)
    parts = [diagram_distance(a.blocks[name], b.blocks[name], d) for name in a.blocks]
    return aggregate_blocks(parts, d)


def block_distances(
    a: StackedPersistenceDiagram, b: StackedPersistenceDiagram, d: DiagramDistance | None = None
) -> dict[str, float]:
    d = d or DiagramDistance()
    return {name: diagram_distance(a.blocks[name], b.blocks[name], d) for name in a.blocks}
