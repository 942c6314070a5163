import itertools
import random

import pytest
from hypothesis import given, strategies as st

from mediankit.convexity import (
    ConvexityError,
    convex_hull,
    convex_set,
    find_facing_tuple,
    gate,
    halfspace_set,
    hull_by_intervals,
    is_facing,
    is_strongly_separated,
    separating_walls,
    shores_and_bridge,
    skewering_search,
    strong_separation_center,
)
from mediankit.pocset import chain_decomposition, distance, inseparable_closure
from mediankit.selftest import random_convex_set
from mediankit.spaces import OutOfDomain, parse_space, strip_wall

SMALL = ["grid:dims=3x2,weights=1/2x1", "tree:3:2", "strip:n=4,w=2", "tos:tree:3:1", "sd:line:3"]


def _brute_convex(R, members):
    """Closed under taking intervals, checked on distances."""
    P = R.pocset
    V = R.vertices
    mem = set(members)
    for i, j in itertools.combinations(mem, 2):
        for k in range(len(V)):
            if distance(P, V[i], V[k]) + distance(P, V[k], V[j]) == distance(P, V[i], V[j]) and k not in mem:
                return False
    return True


@pytest.mark.parametrize("spec", SMALL)
def test_hull_matches_interval_closure(spec):
    R = parse_space(spec).level().realization
    rng = random.Random(1)
    for _ in range(20):
        pts = [rng.choice(R.vertices) for _ in range(rng.randint(1, 4))]
        H = convex_hull(R, pts)
        assert H == hull_by_intervals(R, pts)
        assert H.is_convex() and _brute_convex(R, H.members)
        for p in pts:
            assert p in H


@pytest.mark.parametrize("spec", SMALL)
def test_gate_is_the_unique_nearest_point(spec):
    R = parse_space(spec).level().realization
    P = R.pocset
    rng = random.Random(2)
    for _ in range(15):
        C = random_convex_set(R, rng)
        for x in R.vertices:
            g = gate(x, C)
            d = [distance(P, x, v) for v in C.vertices()]
            best = min(d)
            assert [v for v, dv in zip(C.vertices(), d) if dv == best] == [g]
            gate(x, C, check=True)


def test_gate_rejects_nonconvex_input():
    R = parse_space("line:4").level().realization
    C = convex_set(R, [R.vertices[0], R.vertices[2]])
    assert not C.is_convex()


@pytest.mark.parametrize("spec", SMALL)
def test_bridges_verify_and_split_walls(spec):
    R = parse_space(spec).level().realization
    P = R.pocset
    rng = random.Random(3)
    for _ in range(10):
        C1, C2 = random_convex_set(R, rng), random_convex_set(R, rng)
        br = shores_and_bridge(C1, C2, verify=True)
        x1, x2 = br.gates
        # the gates realise the distance between the two sets
        d = min(distance(P, a, b) for a in C1.vertices() for b in C2.vertices())
        assert distance(P, x1, x2) == d
        assert br.walls_separating == separating_walls(C1, C2)
        assert br.wall_identity_holds()
        data = br.to_json_dict()
        assert data["bridge"] == sorted(br.bridge.members)


def test_bridge_of_two_points_is_their_interval():
    R = parse_space("grid:dims=2x2").level().realization
    a, b = R.vertices[0], R.vertices[-1]
    br = shores_and_bridge(convex_hull(R, [a]), convex_hull(R, [b]))
    assert br.bridge == convex_hull(R, [a, b])
    assert len(br.shore1) == 1


def test_strong_separation_in_the_strip():
    L = parse_space("strip:n=8,w=2").level(8)
    P = L.pocset
    v0_lo = L.hid((strip_wall("V", 0), 0))
    # in width 2 each vertical wall meets a single horizontal one
    for c in (1, 2, 3):
        assert is_strongly_separated(P, v0_lo, L.hid((strip_wall("V", c), 1)))
    assert not is_strongly_separated(P, v0_lo, L.hid((strip_wall("V", 0), 1)))
    W = parse_space("strip:n=8,w=3").level(8)
    a = W.hid((strip_wall("V", 0), 0))
    # V_0 and V_1 both meet H_2
    assert not is_strongly_separated(W.pocset, a, W.hid((strip_wall("V", 1), 1)))
    assert is_strongly_separated(W.pocset, a, W.hid((strip_wall("V", 2), 1)))
    # from width 4 on, V_0 and V_2 share H_3 while V_0 and V_5 share nothing
    F = parse_space("strip:n=8,w=4").level(8)
    a = F.hid((strip_wall("V", 0), 0))
    assert not is_strongly_separated(F.pocset, a, F.hid((strip_wall("V", 2), 1)))
    assert is_strongly_separated(F.pocset, a, F.hid((strip_wall("V", 5), 1)))


def test_inseparable_closure_of_two_strip_verticals():
    L = parse_space("strip:n=8,w=2").level(8)
    hs = [L.hid((strip_wall("V", c), 1)) for c in (0, 4)]
    got = sorted(L.hkey(h) for h in inseparable_closure(L.pocset, hs))
    want = [(strip_wall("V", c), 1) for c in range(5)] + [(strip_wall("H", c), 1) for c in (2, 3, 4)]
    assert got == sorted(want)


def test_line_halfspaces_are_strongly_separated_once_apart():
    L = parse_space("line:5").level(5)
    P = L.pocset
    for i, j in itertools.combinations(range(5), 2):
        assert is_strongly_separated(P, L.hid(((0, i), 0)), L.hid(((0, j), 1)))


def test_facing_tuples():
    L = parse_space("line:5").level(5)
    P = L.pocset
    hs = find_facing_tuple(P, 2, L.base)
    assert is_facing(P, hs)
    assert [L.hkey(h) for h in hs] == [((0, 0), 0), ((0, 1), 1)]
    assert find_facing_tuple(P, 3, L.base) is None
    T = parse_space("tree:3:2").level(2)
    hs = find_facing_tuple(T.pocset, 3, T.base)
    assert sorted(T.hkey(h) for h in hs) == [((0,), 1), ((1,), 1), ((2,), 1)]
    Q = parse_space("grid:dims=1x1").level(1)
    assert find_facing_tuple(Q.pocset, 2) is None
    assert find_facing_tuple(Q.pocset, 3) is None
    with pytest.raises(ConvexityError):
        find_facing_tuple(P, 1)


@given(st.integers(2, 4))
def test_facing_search_agrees_with_brute_force(n):
    for spec in ("tree:3:2", "strip:n=4,w=2", "line:4"):
        P = parse_space(spec).level().pocset
        found = find_facing_tuple(P, n)
        brute = any(is_facing(P, c) for c in itertools.combinations(range(P.size), n))
        assert (found is not None) == brute
        if found is not None:
            assert is_facing(P, found)


def test_strong_separation_center_in_a_tree():
    R = parse_space("tree:3:3").level(3).realization
    L = parse_space("tree:3:3").level(3)
    hs = [L.hid(((i,), 1)) for i in range(3)]
    ks = [L.hid(((i, 0), 1)) for i in range(3)]
    z = strong_separation_center(R, hs, ks)
    assert L.label(z) == ()


def test_skewering_on_line_and_strip():
    X = parse_space("line:n=8,m=4")
    L = X.level(8)
    h = L.hid(((0, 3), 1))
    k = L.hid(((0, 2), 1))
    res = skewering_search(L, [X.automorphism("shift")], h, k)
    assert res.word == ("shift", "shift")
    assert res.gap == 2  # walls 3 and 4 lie between {x>=5} and {x<=3}
    S = parse_space("strip:n=8,w=2,m=2")
    L = S.level(8)
    h = L.hid((strip_wall("V", 3), 1))
    k = L.hid((strip_wall("V", 2), 1))
    res = skewering_search(L, [S.automorphism("shift")], h, k)
    assert res.word is not None and res.gap > 0
    assert L.pocset.leq(res.image, h) and res.image != h


def test_skewering_reports_needed_depth():
    X = parse_space("line:n=3")
    L = X.level(3)
    h, k = L.hid(((0, 2), 1)), L.hid(((0, 1), 1))
    with pytest.raises(OutOfDomain):
        skewering_search(L, [X.automorphism("shift")], h, k)


def test_opposite_corners_of_a_grid_need_one_chain_per_axis():
    L = parse_space("grid:dims=2x3").level(3)
    assert len(chain_decomposition(L.pocset, L.vertex((0, 0)), L.vertex((2, 3)))) == 2


def test_halfspace_set_is_convex():
    R = parse_space("tos:tree:3:1").level(1).realization
    for h in range(R.pocset.size):
        assert halfspace_set(R, h).is_convex()
