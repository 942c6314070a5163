import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mediankit import haagerup as H
from mediankit import ubs as U
from mediankit.pocset import distance
from mediankit.spaces import OutOfDomain, parse_space

keys = st.tuples(st.tuples(st.integers(0, 1), st.integers(-3, 3)), st.integers(0, 1))
vectors = st.dictionaries(keys, st.fractions(min_value=-3, max_value=3, max_denominator=6), max_size=8)


def _vec(d):
    return H.HalfspaceVector(d, {k[0]: Fraction(1, 2) if k[0][0] else Fraction(1) for k in d})


@given(vectors, vectors)
def test_vector_arithmetic(a, b):
    u, v = _vec(a), _vec(b)
    assert (u + v) - v == u
    assert (u - u).norm2() == 0
    assert u.inner(v) == v.inner(u)
    assert (u + v).norm2() == u.norm2() + 2 * u.inner(v) + v.norm2()
    assert u.scale(2).norm2() == 4 * u.norm2()
    assert (-u).norm_p_p(1) == u.norm_p_p(1)


@given(vectors)
def test_vector_json_roundtrip(a):
    u = _vec(a)
    data = json.loads(json.dumps(u.to_json_dict()))
    assert H.HalfspaceVector.from_json_dict(data) == u


def test_vector_needs_weights_for_its_support():
    with pytest.raises(H.HaagerupError):
        H.HalfspaceVector({((0, 0), 1): 1}, {})


def test_indicator_norms():
    L = parse_space("grid:dims=2x2,weights=1/3x2").level(2)
    P = L.pocset
    m = P.sides(L.vertex((2, 1)).bits)
    v = H.indicator(L, m)
    assert v.norm2() == sum(P.weight(h) for h in range(P.size) if (m >> h) & 1)
    with pytest.raises(H.HaagerupError):
        H.signed_indicator(L, [0, 1])


@pytest.mark.parametrize("spec", ["line:n=6,weight=3/2,m=2", "grid:dims=3x3,weights=1/2x3", "strip:n=6,w=2,m=2",
                                  "tree:3:3", "product:tree:3:2|line:3"])
def test_cocycle_norm_is_twice_the_displacement(spec):
    X = parse_space(spec)
    L = X.level()
    for name, g in X.automorphisms().items():
        for lab in L.labels[::3]:
            try:
                b = H.haagerup_cocycle(g, L, lab)
            except OutOfDomain:
                continue
            d = H.displacement(g, L, lab)
            assert b.norm2() == 2 * d
            assert b.norm_p_p(3) == 2 * d


@pytest.mark.parametrize("spec", ["line:n=6,m=3", "grid:dims=3x3,m=1", "tree:3:3"])
def test_cocycle_law(spec):
    X = parse_space(spec)
    L = X.level()
    gens = [g for n, g in sorted(X.automorphisms().items()) if n != "id"]
    gens += [g.inverse() for g in gens]
    n = 0
    for g, h in itertools.product(gens, repeat=2):
        for lab in L.labels[::4]:
            try:
                lhs = H.haagerup_cocycle(g.compose(h), L, lab)
                rhs = H.haagerup_cocycle(h, L, lab).act(g) + H.haagerup_cocycle(g, L, lab)
            except OutOfDomain:
                continue
            assert lhs == rhs
            n += 1
    assert n > 0


def test_cocycle_of_identity_vanishes():
    X = parse_space("tree:3:2")
    L = X.level()
    for lab in L.labels:
        assert H.haagerup_cocycle(X.automorphism("id"), L, lab) == H.HalfspaceVector.zero()


@pytest.mark.parametrize("spec,xi,n,x", [("line:n=9,m=2", "end", 9, 0), ("strip:n=9,w=2,m=1", "diagonal", 9, (0, 1)),
                                         ("grid:dims=7x7,weights=1/2x1", "corner", 7, (1, 0))])
def test_closed_form_profile_matches_dense_alpha(spec, xi, n, x):
    X = parse_space(spec)
    dense = H.profile_from_ubs(U.sigma_difference(X, X.boundary(xi), x, n, check_stability=False))
    closed = H.closed_form_profile(X, X.boundary(xi), x, n)
    assert closed.alpha == dense.alpha
    assert set(closed.keys) == set(dense.keys)
    assert closed.horizon == dense.horizon


def test_closed_form_profile_needs_a_lattice():
    X = parse_space("tree:3:6")
    with pytest.raises(H.HaagerupError):
        H.closed_form_profile(X, X.boundary("ray"), (), 6)


def _line_residual_oracle(c: int) -> Fraction:
    """Residual of (g - 1) F_c - 1_{h_1} on the half-line, walls h_1, h_2, ... with alpha(h_k) = k."""
    F = [Fraction(0)] + [-(1 - Fraction(k, c)) for k in range(1, c + 1)] + [Fraction(0)]
    # (gF)(h_k) = F(h_{k-1}); h_0 lies outside the set
    res = []
    for k in range(1, c + 2):
        val = F[k - 1] - F[k] - (1 if k == 1 else 0)
        res.append(val)
    return sum((v * v for v in res), Fraction(0))


@pytest.mark.parametrize("c", [1, 2, 4, 16, 64])
def test_line_convergence_residual(c):
    X = parse_space("line:n=8,m=2")
    prof = H.closed_form_profile(X, X.boundary("end"), 0, 4 * c + 8)
    row = H.convergence_residual(X.automorphism("shift"), prof, c)
    assert row.residual_sq == _line_residual_oracle(c) == Fraction(1, c)
    assert row.direction == 1 and not row.clipped


def test_convergence_experiment_and_csv():
    X = parse_space("strip:n=8,w=2,m=2")
    out = H.ubs_convergence_experiment(X, X.automorphism("shift"), X.boundary("diagonal"), [4, 16, 64], [256])
    rows = out["rows"]
    assert [r.residual_sq for r in rows] == [Fraction(7, 8), Fraction(31, 128), Fraction(127, 2048)]
    assert 0.4 <= out["beta"][256] <= 0.6
    csv = H.residual_csv(rows)
    assert csv.splitlines()[0] == "c,depth,residual_exact,residual_float"
    assert csv.splitlines()[1].startswith("4,256,7/8,")


def test_fit_decay_exponent_recovers_a_power_law():
    pts = [(c, Fraction(1, c)) for c in (4, 16, 64, 256)]
    assert H.fit_decay_exponent(pts) == pytest.approx(0.5)


def test_f_c_and_g_c():
    X = parse_space("line:n=8,m=2")
    om = U.sigma_difference(X, X.boundary("end"), None, 8, check_stability=False)
    F = H.f_c(om, 4)
    assert sorted(F.coeffs.values()) == [Fraction(-3, 4), Fraction(-1, 2), Fraction(-1, 4)]
    G = H.g_c([om], 4)
    assert G.norm2() == 2 * F.norm2()
    with pytest.raises(H.HaagerupError):
        H.f_c(om, 0)


def test_witness_by_orbit_in_a_tree():
    X = parse_space("tree:3:3")
    gens = [X.automorphism(n) for n in ("rot0", "swap0", "swap1")]
    rep = H.elementarity_witness(X, gens, None, x=(0, 1), depth=3)
    assert rep.method == "orbit" and rep.success
    assert all(r == 0 for r in rep.residuals.values())
    assert len(rep.psi) > 0


def test_witness_on_the_line():
    X = parse_space("line:n=8,m=2")
    rep = H.elementarity_witness(X, [X.automorphism("shift")], X.boundary("end"), epsilon=Fraction(1, 4))
    assert rep.method == "recipe" and rep.success
    assert rep.max_residual_sq() < Fraction(1, 16)
    # both sides of each wall contribute 1/c, so the residual is 2/c
    assert rep.residuals["shift"] == Fraction(2) / rep.c
    data = rep.to_json_dict()
    assert data["success"] is True and data["x_K"] == "0"


def test_witness_rejects_a_boundary_moving_generator():
    X = parse_space("line:n=8,m=4")
    with pytest.raises(H.HaagerupError):
        H.elementarity_witness(X, [X.automorphism("shift"), X.automorphism("flip")], X.boundary("end"))


def test_displacement_is_the_distance_moved():
    X = parse_space("strip:n=6,w=2,m=2")
    L = X.level()
    g = X.automorphism("shift")
    u = L.vertex((0, 1))
    assert H.displacement(g, L, (0, 1)) == distance(L.pocset, u, L.vertex((1, 2))) == 2
