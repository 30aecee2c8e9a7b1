import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tadnet.mlgraph import (
    IngestionError,
    LayerGraph,
    NormalizationScope,
    TransformKind,
    WeightTransform,
    apply_weight_transform,
    build_temporal_graph,
    edge_list_text,
    ingest_edge_list,
    sample_node_budget,
    sample_top_edges,
)

IDENTITY = WeightTransform(TransformKind.IDENTITY)


def ingest(text, transform=IDENTITY):
    return ingest_edge_list(io.StringIO(text), transform)


def test_ingest_aggregates_both_directions():
    g = ingest("t,layer,src,dst,weight\n1,A,u,v,2\n1,A,v,u,3\n1,B,u,w,1\n")
    assert g.times == [1]
    assert g.layer_names == ["A", "B"]
    snap = g.snapshot(1)
    assert snap.layers["A"].weights == {("u", "v"): 5.0}
    assert snap.layers["B"].weights == {("u", "w"): 1.0}


def test_self_loops_dropped_and_counted():
    g = ingest("t,layer,src,dst,weight\n1,A,u,u,4\n1,A,u,v,1\n")
    assert g.warnings["self_loops"] == 1
    assert len(g.snapshot(1).layers["A"]) == 1


def test_missing_snapshot_not_filled():
    g = ingest("t,layer,src,dst,weight\n1,A,u,v,1\n3,A,u,v,1\n")
    assert g.times == [1, 3]


def test_absent_layer_is_empty():
    g = ingest("t,layer,src,dst,weight\n1,A,u,v,1\n2,B,u,v,1\n")
    assert len(g.snapshot(1).layers["B"]) == 0
    assert g.snapshot(2).layer_names == ["A", "B"]


def test_no_trailing_newline():
    g = ingest("t,layer,src,dst,weight\n1,A,u,v,1")
    assert len(g) == 1


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("1,A,u,v\n", "line 2"),
        ("1,A,u,v,abc\n", "line 2"),
        ("1,A,u,v,1\n1,A,u,v,-3\n", "line 3"),
        ("x,A,u,v,1\n", "line 2"),
    ],
)
def test_malformed_rows_name_the_line(body, fragment):
    with pytest.raises(IngestionError, match=fragment):
        ingest("t,layer,src,dst,weight\n" + body)


def test_empty_input():
    with pytest.raises(IngestionError, match="no records"):
        ingest("t,layer,src,dst,weight\n")
    with pytest.raises(IngestionError):
        ingest("")


def test_bad_header():
    with pytest.raises(IngestionError, match="line 1"):
        ingest("time,layer,src,dst,weight\n1,A,u,v,1\n")


def test_unweighted_ignores_weight_column():
    g = ingest("t,layer,src,dst,weight\n1,A,u,v,junk\n1,A,v,w,7\n", WeightTransform(TransformKind.UNWEIGHTED))
    assert set(g.snapshot(1).layers["A"].weights.values()) == {1.0}


def _layer(counts):
    return LayerGraph.from_weights(counts)


def test_reciprocal_transform():
    layer = _layer({("a", "b"): 4, ("a", "c"): 2, ("a", "d"): 1})
    out = apply_weight_transform(layer, WeightTransform(TransformKind.RECIPROCAL))
    assert out.weights == {("a", "b"): 1.0, ("a", "c"): 2.0, ("a", "d"): 4.0}


def test_one_minus_transform():
    layer = _layer({("a", "b"): 4, ("a", "c"): 2})
    out = apply_weight_transform(layer, WeightTransform(TransformKind.ONE_MINUS))
    assert out.weights == pytest.approx({("a", "b"): 0.2, ("a", "c"): 0.6})


def test_unweighted_transform():
    layer = _layer({("a", "b"): 4, ("a", "c"): 2})
    out = apply_weight_transform(layer, WeightTransform(TransformKind.UNWEIGHTED))
    assert set(out.weights.values()) == {1.0}


def test_global_scope_uses_layer_max_over_time():
    raw = {1: {"A": {("a", "b"): 4.0}}, 2: {"A": {("a", "b"): 2.0}}}
    g = build_temporal_graph(raw, WeightTransform(TransformKind.RECIPROCAL, NormalizationScope.GLOBAL_LAYER))
    assert g.snapshot(2).layers["A"].weights[("a", "b")] == 2.0
    g = build_temporal_graph(raw, WeightTransform(TransformKind.RECIPROCAL))
    assert g.snapshot(2).layers["A"].weights[("a", "b")] == 1.0


def test_layer_invariants_rejected():
    with pytest.raises(ValueError):
        LayerGraph(frozenset({"a"}), {("a", "a"): 1.0}, {("a", "a"): 1.0})
    with pytest.raises(ValueError):
        LayerGraph(frozenset({"a"}), {("a", "b"): 1.0}, {("a", "b"): 1.0})
    with pytest.raises(ValueError):
        LayerGraph(frozenset({"a", "b"}), {("a", "b"): 1.0}, {("a", "b"): 0.0})


def test_sample_top_edges_star():
    counts = {("c", f"l{i}"): x for i, x in enumerate([10, 9, 1, 1, 1], start=1)}
    out = sample_top_edges(_layer(counts), 2)
    assert out.nodes == frozenset({"c", "l1", "l2"})
    assert len(out) == 2


def test_sample_top_edges_keeps_induced_edges():
    counts = {("a", "b"): 10, ("c", "d"): 9, ("b", "c"): 1, ("d", "e"): 1}
    out = sample_top_edges(_layer(counts), 2)
    assert set(out.edges) == {("a", "b"), ("c", "d"), ("b", "c")}


def test_sample_noop_when_small():
    layer = _layer({("a", "b"): 1, ("b", "c"): 2})
    assert sample_top_edges(layer, 5) is layer
    assert sample_top_edges(LayerGraph.empty(), 3) == LayerGraph.empty()


def test_sample_ties_break_lexicographically():
    layer = _layer({("a", "z"): 1, ("a", "b"): 1, ("m", "n"): 1})
    assert sample_top_edges(layer, 1).nodes == frozenset({"a", "b"})


def test_node_budget():
    counts = {("a", "b"): 10, ("c", "d"): 9, ("b", "c"): 8, ("e", "f"): 7}
    out = sample_node_budget(_layer(counts), 3)
    assert out.nodes == frozenset({"a", "b"})
    out = sample_node_budget(_layer(counts), 4)
    assert out.nodes == frozenset({"a", "b", "c", "d"})
    assert ("b", "c") in out.weights


records = st.lists(
    st.tuples(
        st.integers(0, 5),
        st.sampled_from(["A", "B", "C"]),
        st.sampled_from("uvwxyz"),
        st.sampled_from("uvwxyz"),
        st.integers(1, 50),
    ),
    min_size=1,
    max_size=40,
)


def _csv(rows):
    return "t,layer,src,dst,weight\n" + "".join(f"{t},{l},{s},{d},{w}\n" for t, l, s, d, w in rows)


@settings(max_examples=60, deadline=None)
@given(records)
def test_round_trip(rows):
    if all(s == d for _, _, s, d, _ in rows):
        return
    g = ingest(_csv(rows))
    again = ingest(edge_list_text(g))
    non_empty = [n for n in g.layer_names if any(len(s.layers[n]) for s in g.snapshots)]
    assert again.layer_names == non_empty
    for a, b in zip(g.snapshots, again.snapshots):
        assert a.time == b.time
        for name in non_empty:
            assert a.layers[name] == b.layers[name]


@settings(max_examples=60, deadline=None)
@given(records, st.sampled_from(list(TransformKind)))
def test_transform_preserves_structure(rows, kind):
    g = ingest(_csv(rows))
    for snap in g.snapshots:
        for layer in snap.layers.values():
            out = apply_weight_transform(layer, WeightTransform(kind))
            assert out.nodes == layer.nodes
            assert set(out.weights) == set(layer.weights)
            assert all(w > 0 for w in out.weights.values())


@settings(max_examples=60, deadline=None)
@given(records, st.integers(1, 6))
def test_sampling_is_induced_and_deterministic(rows, budget):
    g = ingest(_csv(rows))
    for snap in g.snapshots:
        for layer in snap.layers.values():
            out = sample_node_budget(layer, budget)
            assert len(out.nodes) <= max(budget, 0) or out is layer
            assert out == sample_node_budget(layer, budget)
            expected = {e for e in layer.weights if e[0] in out.nodes and e[1] in out.nodes}
            assert set(out.weights) == expected
