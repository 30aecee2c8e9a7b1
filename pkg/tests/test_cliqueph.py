import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tadnet.cliqueph as cph
from oracles import random_weight_matrix, sweep_community_pd
from tadnet.cliqueph import (
    CliqueLimitError,
    PersistenceDiagram,
    clique_community_pd,
    enumerate_k_cliques,
    filtration_grid,
    layer_pd,
)
from tadnet.geodesic import GeodesicLayer, densify
from tadnet.mlgraph import LayerGraph
from tadnet.pdmetric import CapMismatchWarning, DiagramDistance, DistanceKind, diagram_distance


def G(edges, nodes=()):
    return LayerGraph.from_weights(edges, nodes)


def geo_from_matrix(w, name=""):
    n = len(w)
    return GeodesicLayer(tuple(f"n{i:02d}" for i in range(n)), np.array(w, dtype=float), name)


def uncapped(pd):
    return sorted((b, math.inf if e else d, k, e) for b, d, k, e in pd.points())


def test_enumerate_triangle_unit():
    tri = G({("a", "b"): 1, ("b", "c"): 1, ("a", "c"): 1})
    cliques = enumerate_k_cliques(tri, 2)
    assert [c.filtration_value for c in cliques if len(c.vertices) == 1] == [0.0] * 3
    assert [c.filtration_value for c in cliques if len(c.vertices) == 2] == [1.0] * 3


def test_enumerate_triangle_value_is_max_edge():
    tri = G({("a", "b"): 1, ("b", "c"): 2, ("a", "c"): 3})
    (top,) = [c for c in enumerate_k_cliques(tri, 3) if len(c.vertices) == 3]
    assert top.vertices == ("a", "b", "c")
    assert top.filtration_value == 3.0


def test_enumerate_four_cycle_has_no_triangles():
    c4 = G({("a", "b"): 1, ("b", "c"): 1, ("c", "d"): 1, ("a", "d"): 1})
    assert not [c for c in enumerate_k_cliques(c4, 3) if len(c.vertices) == 3]


def test_enumerate_ceiling():
    k5 = G({(a, b): 1 for a in "abcde" for b in "abcde" if a < b})
    with pytest.raises(CliqueLimitError):
        enumerate_k_cliques(k5, 3, ceiling=10)


def test_large_complete_layer_fails_fast():
    rng = np.random.default_rng(0)
    w = rng.uniform(1, 2, (120, 120))
    w = np.triu(w, 1) + np.triu(w, 1).T
    with pytest.raises(CliqueLimitError) as info:
        layer_pd(geo_from_matrix(w, "big"), 20)
    assert info.value.count > info.value.ceiling


def test_components_are_independent():
    # two disjoint triangles with different weights
    w = np.full((6, 6), np.inf)
    np.fill_diagonal(w, 0)
    for block, val in ((range(3), 1.0), (range(3, 6), 2.0)):
        for a in block:
            for b in block:
                if a != b:
                    w[a, b] = val
    pd = clique_community_pd(geo_from_matrix(w), 3)
    assert uncapped(pd) == [(1.0, math.inf, 3, True), (2.0, math.inf, 3, True)]


def test_k1_single_edge():
    pd = clique_community_pd(G({("a", "b"): 5}), 1)
    assert uncapped(pd) == [(0.0, 5.0, 1, False), (0.0, math.inf, 1, True)]


def test_k2_triangle():
    pd = clique_community_pd(G({("a", "b"): 1, ("b", "c"): 1, ("a", "c"): 1}), 2)
    assert uncapped(pd) == [(1.0, math.inf, 2, True)]


def test_k2_path():
    pd = clique_community_pd(G({("a", "b"): 1, ("b", "c"): 3}), 2)
    assert uncapped(pd) == [(1.0, math.inf, 2, True)]


def test_k1_two_disjoint_edges():
    pd = clique_community_pd(G({("a", "b"): 2, ("c", "d"): 4}), 1)
    assert uncapped(pd) == [(0.0, 2.0, 1, False), (0.0, 4.0, 1, False), (0.0, math.inf, 1, True), (0.0, math.inf, 1, True)]


def test_k3_two_triangles_sharing_an_edge():
    # abc closes at 2, abd closes at 5, they share the face ab
    w = {("a", "b"): 1, ("a", "c"): 2, ("b", "c"): 2, ("a", "d"): 5, ("b", "d"): 5}
    pd = clique_community_pd(G(w), 3)
    assert uncapped(pd) == [(2.0, math.inf, 3, True)]


def test_k3_elder_rule():
    # two triangles born at 1 and 2 joined by a third born at 3
    w = {
        ("a", "b"): 1, ("b", "c"): 1, ("a", "c"): 1,
        ("d", "e"): 2, ("e", "f"): 2, ("d", "f"): 2,
        ("c", "d"): 3, ("b", "d"): 3, ("c", "e"): 3,
    }
    pd = clique_community_pd(G(w), 3)
    assert uncapped(pd) == [(1.0, math.inf, 3, True), (2.0, 3.0, 3, False)]


def test_layer_pd_caps_and_tags():
    pd = layer_pd(densify(G({("a", "b"): 2, ("c", "d"): 4})), 2)
    assert pd.cap == 4.0
    assert pd.points() == [
        (0.0, 2.0, 1, False), (0.0, 4.0, 1, False), (0.0, 4.0, 1, True), (0.0, 4.0, 1, True),
        (2.0, 4.0, 2, True), (4.0, 4.0, 2, True),
    ]


def test_layer_pd_empty():
    assert len(layer_pd(densify(LayerGraph.empty()), 4)) == 0


def test_filtration_grid():
    g = G({("a", "b"): 3, ("b", "c"): 1, ("c", "d"): 3})
    assert filtration_grid(g).tolist() == [1.0, 3.0]


def test_csv_round_trip():
    pd = layer_pd(densify(G({("a", "b"): 0.1, ("b", "c"): 0.7, ("c", "a"): 0.3})), 3)
    buf = io.StringIO()
    pd.write_csv(buf)
    assert buf.getvalue().startswith("k,birth,death,essential\n")
    assert PersistenceDiagram.read_csv(io.StringIO(buf.getvalue())) == pd


def test_empty_layer_csv_is_header_only():
    buf = io.StringIO()
    layer_pd(densify(LayerGraph.empty()), 4).write_csv(buf)
    assert buf.getvalue() == "k,birth,death,essential\n"


@pytest.mark.parametrize("seed", range(25))
def test_matches_sweep_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    w = random_weight_matrix(rng, n, float(rng.uniform(0.2, 0.9)), integer=bool(seed % 2))
    geo = geo_from_matrix(w)
    pd = layer_pd(geo, 4)
    for k in range(1, 5):
        got = uncapped(pd.restrict(k))
        want = sweep_community_pd(w, k)
        assert got == want, (seed, k)


@pytest.mark.parametrize("seed", range(8))
def test_reference_path_agrees(seed, monkeypatch):
    rng = np.random.default_rng(1000 + seed)
    w = random_weight_matrix(rng, 12, 0.6, integer=True)
    g = geo_from_matrix(w)
    fast = [clique_community_pd(g, k) for k in range(1, 5)]
    monkeypatch.setattr(cph, "FACE_TABLE_LIMIT", 0)
    slow = [clique_community_pd(g, k) for k in range(1, 5)]
    assert fast == slow


def test_k1_essentials_count_components():
    g = G({("a", "b"): 1, ("c", "d"): 1, ("d", "e"): 2}, ["x"])
    pd = clique_community_pd(g, 1)
    assert int(pd.essential.sum()) == 3


def test_deterministic_under_node_relabelling():
    rng = np.random.default_rng(7)
    w = random_weight_matrix(rng, 10, 0.7, integer=True)
    perm = rng.permutation(10)
    a = layer_pd(geo_from_matrix(w), 4)
    b = layer_pd(geo_from_matrix(w[np.ix_(perm, perm)]), 4)
    assert a == b
    assert a == layer_pd(geo_from_matrix(w), 4)


BOTTLENECK = DiagramDistance(DistanceKind.BOTTLENECK)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.01, 0.1]))
def test_stability_under_bounded_perturbation(seed, eps):
    rng = np.random.default_rng(seed)
    w = random_weight_matrix(rng, 9, 0.6)
    geo = densify(
        LayerGraph.from_weights(
            {(f"n{i}", f"n{j}"): w[i, j] for i in range(9) for j in range(i + 1, 9) if np.isfinite(w[i, j])},
            [f"n{i}" for i in range(9)],
        )
    )
    noise = rng.uniform(-eps, eps, size=geo.dist.shape)
    noise = np.triu(noise, 1)
    noise = noise + noise.T
    moved = np.where(np.isfinite(geo.dist), geo.dist + noise, np.inf)
    moved = np.maximum(moved, np.where(np.eye(9, dtype=bool), 0.0, 1e-6))
    a = layer_pd(geo, 4)
    b = layer_pd(GeodesicLayer(geo.nodes, moved), 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CapMismatchWarning)
        assert diagram_distance(a, b, BOTTLENECK) <= eps + 1e-9
