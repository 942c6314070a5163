import itertools
from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from conftest import brute_ultrafilters, point_set_pocset
from mediankit.pocset import (
    BudgetExceeded,
    PocsetError,
    Ultrafilter,
    WeightedPocset,
    chain_decomposition,
    distance,
    ids_of,
    inseparable_closure,
    inseparable_closure_mask,
    is_ultrafilter,
    median,
    minimal_chain_cover,
    rank,
    realize,
    separating,
    swap_sides,
    ultrafilter_from_sides,
    validate,
)

points2 = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=7, unique=True)
points3 = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 1)),
                   min_size=2, max_size=6, unique=True)
weights = st.lists(st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=5), min_size=3, max_size=3)


def _nonsplit(points):
    return len({p for p in points}) >= 2 and any(len({p[a] for p in points}) > 1 for a in range(len(points[0])))


def test_line_pocset_json_roundtrip():
    P = WeightedPocset.from_pairs(3, [(0, 2), (2, 4)], ["1/2", 1, 3])
    data = P.to_json_dict()
    assert data["walls"] == 3
    assert data["weights"] == ["1/2", "1/1", "3/1"]
    assert WeightedPocset.from_json_dict(data) == P
    assert data["leq"] == sorted(data["leq"])


def test_validate_reports_broken_axioms():
    P = WeightedPocset.from_pairs(1, [(0, 1)])
    assert any("degenerate" in p for p in validate(P))
    bad = WeightedPocset(2, (1, 2, 4 | 1, 8), (Fraction(1), Fraction(1)))
    assert validate(bad)
    neg = WeightedPocset.from_pairs(1, [], [0])
    assert any("non-positive" in p for p in validate(neg))


def test_from_json_rejects_wrong_weight_count():
    with pytest.raises(PocsetError):
        WeightedPocset.from_json_dict({"walls": 2, "leq": [], "weights": ["1/1"]})


@given(points2)
def test_realization_matches_brute_force_ultrafilters(points):
    if not _nonsplit(points):
        return
    P, _ = point_set_pocset(points)
    assert validate(P) == []
    R = realize(P)
    brute = {u.bits for u in brute_ultrafilters(P)}
    assert {v.bits for v in R.vertices} == brute


@given(points2)
def test_points_are_ultrafilters(points):
    if not _nonsplit(points):
        return
    P, bits = point_set_pocset(points)
    for b in bits:
        assert is_ultrafilter(P, Ultrafilter(b, P.walls))


@given(points2, weights)
def test_median_is_betweenness_median(points, ws):
    if not _nonsplit(points):
        return
    P, _ = point_set_pocset(points, ws)
    R = realize(P)
    G = nx.Graph()
    for i, j in R.edges:
        w = (R.vertices[i].bits ^ R.vertices[j].bits).bit_length() - 1
        G.add_edge(i, j, weight=P.weights[w])
    G.add_nodes_from(range(len(R.vertices)))
    D = dict(nx.all_pairs_dijkstra_path_length(G))
    V = R.vertices
    n = len(V)
    for i, j in itertools.combinations(range(n), 2):
        assert D[i][j] == distance(P, V[i], V[j])
    for a, b, c in itertools.combinations_with_replacement(range(n), 3):
        m = R.index_of(median(V[a], V[b], V[c]))
        between = [x for x in range(n) if D[a][x] + D[x][b] == D[a][b]
                   and D[b][x] + D[x][c] == D[b][c] and D[a][x] + D[x][c] == D[a][c]]
        assert between == [m]


def _brute_rank(P):
    best = 1 if P.walls else 0
    for r in range(2, P.walls + 1):
        found = False
        for ws in itertools.combinations(range(P.walls), r):
            if all(P.transverse(2 * a, 2 * b) for a, b in itertools.combinations(ws, 2)):
                found = True
                break
        if not found:
            break
        best = r
    return best


@given(points3)
def test_rank_matches_brute_force(points):
    if not _nonsplit(points):
        return
    P, _ = point_set_pocset(points)
    assert rank(P) == _brute_rank(P)


def _brute_width(P, elems):
    """Largest antichain, which equals the fewest chains."""
    best = 0
    for r in range(1, len(elems) + 1):
        if any(all(not P.comparable(a, b) for a, b in itertools.combinations(s, 2))
               for s in itertools.combinations(elems, r)):
            best = r
        else:
            break
    return best


@given(points2)
def test_chain_decomposition_is_minimal_and_bounded_by_rank(points):
    if not _nonsplit(points):
        return
    P, _ = point_set_pocset(points)
    R = realize(P)
    r = rank(P)
    for a, b in itertools.combinations(R.vertices, 2):
        chains = chain_decomposition(P, a, b)
        elems = ids_of(separating(P, b, a))
        assert sorted(h for c in chains for h in c) == elems
        for c in chains:
            for x, y in zip(c, c[1:]):
                assert P.leq(y, x)
        assert len(chains) == _brute_width(P, elems)
        assert len(chains) <= r


@given(points2, st.data())
def test_inseparable_closure_matches_definition(points, data):
    if not _nonsplit(points):
        return
    P, _ = point_set_pocset(points)
    A = data.draw(st.lists(st.integers(0, P.size - 1), min_size=1, max_size=4, unique=True))
    got = inseparable_closure(P, A)
    want = {j for j in range(P.size) if any(P.leq(h, j) and P.leq(j, k) for h in A for k in A)}
    assert got == want


def test_minimal_chain_cover_orders_by_inclusion():
    P = WeightedPocset.from_pairs(4, [(0, 2), (2, 4), (4, 6)])
    assert minimal_chain_cover(P, [0, 2, 4, 6]) == [[6, 4, 2, 0]]


def test_swap_sides_is_an_involution():
    for m in range(64):
        assert swap_sides(swap_sides(m, 3), 3) == m


def test_ultrafilter_from_sides_checks_closure():
    P = WeightedPocset.from_pairs(2, [(0, 2)])
    assert ultrafilter_from_sides(P, [0, 2]).bits == 0
    with pytest.raises(PocsetError):
        ultrafilter_from_sides(P, [0, 3])
    with pytest.raises(PocsetError):
        ultrafilter_from_sides(P, [0])


def test_realize_respects_vertex_cap():
    P = WeightedPocset.from_pairs(6, [])
    with pytest.raises(BudgetExceeded) as exc:
        realize(P, cap=10)
    assert exc.value.budget == "vertices"


def test_weighted_distance_is_exact():
    P = WeightedPocset.from_pairs(2, [], [Fraction(1, 3), Fraction(5, 7)])
    a, b = Ultrafilter(0, 2), Ultrafilter(3, 2)
    assert distance(P, a, b) == Fraction(1, 3) + Fraction(5, 7)


def test_inseparable_closure_of_empty_set_is_an_error():
    P = WeightedPocset.from_pairs(1, [])
    with pytest.raises(PocsetError):
        inseparable_closure(P, [])
    assert inseparable_closure_mask(P, 0) == 0
