import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mediankit.pocset import distance, rank, validate
from mediankit.spaces import (
    OutOfDomain,
    SpaceError,
    grid,
    line,
    parse_space,
    product,
    regular_tree,
    strip,
    strip_wall,
    tree_of_squares,
)

SPECS = [
    ("line:n=5,weight=3/2,m=1", 5),
    ("grid:dims=2x3,weights=1/2x3", 3),
    ("tree:3:2", 2),
    ("strip:n=5,w=2,m=1", 5),
    ("tos:tree:3:1", 1),
    ("sd:line:3", 3),
    ("sd:grid:1x1", 1),
    ("product:tree:3:2|line:3", 3),
]


@pytest.mark.parametrize("spec,n", SPECS)
def test_levels_are_valid_and_labelled(spec, n):
    L = parse_space(spec).level(n)
    assert validate(L.pocset) == []
    R = L.realization
    assert len(R.vertices) == len(L.labels)
    for lab in L.labels:
        assert L.label(L.vertex(lab)) == lab


@pytest.mark.parametrize("spec,n", SPECS)
def test_vertex_estimate_is_exact_when_known(spec, n):
    X = parse_space(spec)
    est = X.vertex_estimate(n)
    if est is not None:
        assert est == len(X.level(n).labels)


@pytest.mark.parametrize("spec,n", SPECS)
def test_automorphisms_preserve_order_weights_and_distance(spec, n):
    X = parse_space(spec)
    L = X.level(n)
    P = L.pocset
    for name, g in X.automorphisms().items():
        hm = g.halfspace_map(L)
        for h, k in itertools.product(hm, repeat=2):
            assert P.leq(h, k) == P.leq(hm[h], hm[k])
        for h, gh in hm.items():
            assert P.weight(h) == P.weight(gh)
            assert hm.get(h ^ 1) in (gh ^ 1, None)
        for lab in L.labels:
            u = L.vertex(lab)
            gu = g.try_vertex(L, u)
            if gu is None:
                continue
            # the vertex action agrees with the halfspace action
            for h, gh in hm.items():
                assert u.contains(h) == gu.contains(gh)
            for lab2 in L.labels[:8]:
                v = L.vertex(lab2)
                gv = g.try_vertex(L, v)
                if gv is not None:
                    assert distance(P, u, v) == distance(P, gu, gv)


def test_line_counts_and_rank():
    X = line(3)
    L = X.level(3)
    assert L.pocset.walls == 3 and len(L.labels) == 4
    assert rank(L.pocset) == 1


def test_grid_and_strip_rank():
    assert rank(grid((2, 2)).level(2).pocset) == 2
    S = strip(4, 2)
    assert rank(S.level(4).pocset) == 2 == S.declared_rank
    assert rank(strip(4, 1).level(4).pocset) == 1


def test_tree_of_squares_doubles_tree_distance():
    T = regular_tree(3, 2)
    Q = tree_of_squares(T)
    LT, LQ = T.level(2), Q.level(2)
    for a, b in itertools.combinations(LT.labels, 2):
        d = distance(LT.pocset, LT.vertex(a), LT.vertex(b))
        dq = distance(LQ.pocset, LQ.vertex(("v", a)), LQ.vertex(("v", b)))
        assert dq == 2 * d
    assert rank(LQ.pocset) == 2


def test_product_distance_is_l1():
    X = product(line(2), regular_tree(3, 1))
    L = X.level(X.default_depth)
    A, B = X.factor_levels(X.default_depth)
    for (a1, b1), (a2, b2) in itertools.combinations(L.labels, 2):
        d = distance(L.pocset, L.vertex((a1, b1)), L.vertex((a2, b2)))
        assert d == distance(A.pocset, A.vertex(a1), A.vertex(a2)) + distance(B.pocset, B.vertex(b1), B.vertex(b2))


def test_subdivision_halves_wall_weights_and_keeps_distance():
    X = parse_space("sd:line:3")
    base = parse_space("line:3").level(3)
    L = X.level(3)
    for a, b in itertools.combinations(base.labels, 2):
        d = distance(base.pocset, base.vertex(a), base.vertex(b))
        assert distance(L.pocset, L.vertex((a, a)), L.vertex((b, b))) == d
    assert all(w == Fraction(1, 2) for w in L.pocset.weights)


def test_injection_follows_wall_keys():
    X = parse_space("strip:n=4,w=2")
    inj = X.injection(5)
    lo, hi = X.level(4), X.level(5)
    for h, k in inj.items():
        assert lo.hkey(h) == hi.hkey(k)
        for h2, k2 in inj.items():
            assert lo.pocset.leq(h, h2) == hi.pocset.leq(k, k2)


@pytest.mark.parametrize("spec", ["line:n=4,m=2", "grid:dims=3x2,m=1", "strip:n=5,w=2,m=1", "strip:n=6,w=3"])
def test_closed_form_order_matches_dense_order(spec):
    X = parse_space(spec)
    for n in range(1, 7):
        L = X.level(n)
        for h, k in itertools.product(range(L.pocset.size), repeat=2):
            assert X.closed_form_leq(n, L.hkey(h), L.hkey(k)) == L.pocset.leq(h, k)


def test_strip_vertical_wall_meets_one_horizontal():
    X = strip(8, 2)
    L = X.level(8)
    v = L.hid((strip_wall("V", 3), 1))
    crossing = [L.hkey(k)[0] for k in range(0, L.pocset.size, 2) if L.pocset.transverse(v, k)]
    assert crossing == [strip_wall("H", 4)]


def test_automorphism_words_and_inverses():
    X = line(6, margin=2)
    L = X.level(6)
    g = X.automorphism("shift*shift^-1")
    for h in range(L.pocset.size):
        assert g.map_halfspace(L, h) == h
    s2 = X.automorphism("shift*shift")
    assert s2.apply_to_vertex(L, L.vertex(0)) == L.vertex(2)
    with pytest.raises(OutOfDomain):
        s2.apply_to_vertex(L, L.vertex(6))


def test_line_flip_inverts_a_wall():
    X = line(4, margin=4)
    L = X.level(4)
    assert X.automorphism("flip").inverts_walls(L)


@pytest.mark.parametrize("spec,col", [("strip:n=8,q=2", 11), ("blob:3", 1), ("line:n=x", None)])
def test_parse_errors_carry_a_column(spec, col):
    with pytest.raises(SpaceError) as exc:
        parse_space(spec)
    if col is not None:
        assert exc.value.column == col


def test_unknown_generator_and_boundary():
    X = line(4)
    with pytest.raises(SpaceError):
        X.automorphism("twist")
    with pytest.raises(SpaceError):
        X.boundary("nowhere")
    with pytest.raises(SpaceError):
        parse_space("tree:3:2").automorphism("shift")


@given(st.integers(1, 6), st.integers(1, 3))
def test_strip_vertex_count(n, w):
    X = strip(n, w)
    L = X.level(n)
    brute = sum(1 for i in range(n + 1) for j in range(n + 1) if 0 <= j - i <= w)
    assert len(L.labels) == brute == X.vertex_estimate(n)


def test_boundary_point_is_an_ultrafilter_at_every_depth():
    for spec, xi in [("line:n=4", "end"), ("grid:dims=2x2", "corner"), ("tree:3:2", "ray"),
                     ("strip:n=4,w=2", "diagonal"), ("product:line:3|line:3", "end|end")]:
        X = parse_space(spec)
        b = X.boundary(xi)
        for n in range(1, 5):
            L = X.level(n)
            u = b.at(L)
            assert L.pocset.is_ultrafilter_sides(L.pocset.sides(u.bits))
