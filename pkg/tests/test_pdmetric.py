import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_distances
from tadnet.cliqueph import PersistenceDiagram
from tadnet.pdmetric import (
    CapMismatchWarning,
    DiagramDistance,
    DistanceKind,
    StackedPersistenceDiagram,
    block_distances,
    bottleneck_points,
    diagram_distance,
    spd_distance,
    stack,
    wasserstein_points,
)

W1 = DiagramDistance()
W2 = DiagramDistance(r=2.0)
BN = DiagramDistance(DistanceKind.BOTTLENECK)


def pd(*pts, cap=None):
    return PersistenceDiagram.from_points([(b, d, k, False) for b, d, k in pts], cap)


def test_identical_is_zero():
    a = pd((0, 2, 1), (1, 3, 2))
    assert diagram_distance(a, a, W1) == 0.0
    assert diagram_distance(a, a, BN) == 0.0


def test_single_point_against_empty():
    a, b = pd((0, 2, 1)), pd()
    assert diagram_distance(a, b, BN) == 1.0
    assert diagram_distance(a, b, W1) == 1.0


def test_direct_match_beats_diagonal():
    a, b = pd((0, 1, 1)), pd((0, 2, 1))
    assert diagram_distance(a, b, BN) == 1.0
    assert diagram_distance(a, b, W1) == 1.0


def test_k_tags_block_matching():
    a, b = pd((0, 4, 1)), pd((0, 4, 2))
    assert diagram_distance(a, b, W1) == 4.0
    assert diagram_distance(a, b, DiagramDistance(match_across_k=True)) == 0.0


def test_empty_point_sets():
    e = np.zeros((0, 2))
    assert wasserstein_points(e, e) == 0.0
    assert bottleneck_points(e, e) == 0.0


def test_parse_and_label():
    assert DiagramDistance.parse("w1") == W1
    assert DiagramDistance.parse("W2").r == 2.0
    assert DiagramDistance.parse("bottleneck").kind is DistanceKind.BOTTLENECK
    assert DiagramDistance.parse("w3").label == "w3"
    with pytest.raises(ValueError):
        DiagramDistance.parse("euclid")
    with pytest.raises(ValueError):
        DiagramDistance(r=0.5)


def test_infinite_deaths_rejected():
    a = PersistenceDiagram.from_points([(0.0, float("inf"), 1, True)])
    with pytest.raises(ValueError):
        diagram_distance(a, a)


def test_cap_mismatch_warns():
    a = pd((0, 1, 1), cap=1.0)
    b = pd((0, 1, 1), cap=2.0)
    with pytest.warns(CapMismatchWarning):
        diagram_distance(a, b)


def test_stack_keeps_blocks_and_counts():
    blocks = [
        ("A", pd((0, 1, 1), (0, 2, 1), (1, 2, 2))),
        ("B", pd((0, 3, 1), (0, 1, 1))),
        ("C", pd((0, 1, 1), (0, 2, 1), (0, 5, 1))),
    ]
    spd = stack(blocks, 4)
    assert spd.layer_names == ["A", "B", "C"]
    assert [len(spd.blocks[n]) for n in spd.layer_names] == [3, 2, 3]
    assert len(spd) == 8
    with pytest.raises(ValueError):
        stack([("A", pd()), ("A", pd())], 1)


def test_all_empty_blocks():
    spd = stack([("A", pd()), ("B", pd())], 1)
    assert spd.layer_names == ["A", "B"]
    assert spd_distance(spd, spd) == 0.0


def test_spd_aggregation():
    a = stack([("A", pd((0, 2, 1))), ("B", pd((0, 5, 1)))], 1)
    b = stack([("A", pd()), ("B", pd())], 2)
    assert block_distances(a, b, W1) == {"A": 1.0, "B": 2.5}
    assert spd_distance(a, b, W1) == 3.5
    assert spd_distance(a, b, BN) == 2.5
    assert spd_distance(a, b, W2) == pytest.approx((1 + 2.5**2) ** 0.5)


def test_spd_layer_mismatch():
    with pytest.raises(ValueError):
        spd_distance(stack([("A", pd())], 1), stack([("B", pd())], 2))


def test_single_layer_degenerates():
    a, b = pd((0, 2, 1), (1, 4, 2)), pd((0, 3, 1))
    for d in (W1, W2, BN):
        assert spd_distance(stack([("A", a)], 1), stack([("A", b)], 2), d) == diagram_distance(a, b, d)


def test_pooled_lets_blocks_mix():
    a = stack([("A", pd((0, 4, 1))), ("B", pd())], 1)
    b = stack([("A", pd()), ("B", pd((0, 4, 1)))], 2)
    assert spd_distance(a, b, W1) == 4.0
    assert spd_distance(a, b, DiagramDistance(pooled=True)) == 0.0


def _random_points(rng, n, ks=(1, 2)):
    pts = []
    for _ in range(n):
        b = float(rng.integers(0, 6)) if rng.random() < 0.5 else float(rng.uniform(0, 5))
        pts.append((b, b + float(rng.uniform(0, 4)), int(rng.choice(ks))))
    return pts


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    a = _random_points(rng, int(rng.integers(0, 5)))
    b = _random_points(rng, int(rng.integers(0, 5)))
    bott, w1 = exhaustive_distances(a, b, 1.0)
    _, w2 = exhaustive_distances(a, b, 2.0)
    assert diagram_distance(pd(*a), pd(*b), BN) == pytest.approx(bott, abs=1e-9)
    assert diagram_distance(pd(*a), pd(*b), W1) == pytest.approx(w1, abs=1e-9)
    # for r > 1 the per-k blocks combine as an r-norm, which the joint optimum equals
    assert diagram_distance(pd(*a), pd(*b), W2) == pytest.approx(w2, abs=1e-9)


point = st.tuples(st.floats(0, 10, allow_nan=False), st.floats(0, 5, allow_nan=False), st.integers(1, 3)).map(
    lambda p: (p[0], p[0] + p[1], p[2])
)
diagrams = st.lists(point, max_size=6).map(lambda pts: pd(*pts))


@settings(max_examples=80, deadline=None)
@given(diagrams, diagrams, diagrams, st.sampled_from([W1, W2, BN]))
def test_metric_axioms(a, b, c, d):
    ab, ba = diagram_distance(a, b, d), diagram_distance(b, a, d)
    assert ab >= 0
    assert ab == pytest.approx(ba, abs=1e-9)
    assert diagram_distance(a, a, d) == 0
    assert ab <= diagram_distance(a, c, d) + diagram_distance(c, b, d) + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(diagrams, diagrams), min_size=1, max_size=4), st.sampled_from([W1, BN]))
def test_spd_dominates_blocks(pairs, d):
    names = [f"L{i}" for i in range(len(pairs))]
    a = stack(zip(names, (p[0] for p in pairs)), 1)
    b = stack(zip(names, (p[1] for p in pairs)), 2)
    total = spd_distance(a, b, d)
    for v in block_distances(a, b, d).values():
        assert total >= v - 1e-12


def test_pooled_merges_points():
    spd = StackedPersistenceDiagram(3, {"A": pd((0, 1, 1)), "B": pd((0, 2, 1)), "C": pd()})
    assert spd.pooled().points() == [(0.0, 1.0, 1, False), (0.0, 2.0, 1, False)]
