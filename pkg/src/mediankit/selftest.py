"""Invariant suite over the shipped corpus of spaces.

Each check is a top-level function of a corpus entry so the suite can be
farmed out to worker processes; the report is assembled in corpus order,
which keeps it byte-identical whatever the number of workers.
"""
from __future__ import annotations

import itertools
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import networkx as nx

from .convexity import ConvexityError, convex_hull, shores_and_bridge
from .haagerup import displacement, haagerup_cocycle, indicator
from .pocset import chain_decomposition, median, rank, validate
from .spaces import OutOfDomain, parse_space
from . import ubs as U

# (space spec, depth); kept small so the whole suite runs in seconds
CORPUS = (
    ("line:n=6,m=2", 6),
    ("line:n=5,weight=3/2", 5),
    ("grid:dims=3x3,m=1", 3),
    ("grid:dims=2x3,weights=1/2x3", 3),
    ("tree:3:3", 3),
    ("strip:n=6,w=2,m=2", 6),
    ("tos:tree:3:2", 2),
    ("sd:line:4", 4),
    ("product:tree:3:2|line:3", 3),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    subject: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name} {self.subject}: {self.detail}"


def graph_distances(R) -> dict:
    """All-pairs weighted path lengths in the realization, as Fractions."""
    P = R.pocset
    G = nx.Graph()
    G.add_nodes_from(range(len(R.vertices)))
    for i, j in R.edges:
        w = (R.vertices[i].bits ^ R.vertices[j].bits).bit_length() - 1
        G.add_edge(i, j, weight=P.weights[w])
    return dict(nx.all_pairs_dijkstra_path_length(G))


def betweenness_median(R, D: dict, a: int, b: int, c: int) -> list[int]:
    """Every vertex lying on geodesics between each pair of ``a, b, c``."""
    out = []
    for m in range(len(R.vertices)):
        if (D[a][m] + D[m][b] == D[a][b] and D[b][m] + D[m][c] == D[b][c]
                and D[a][m] + D[m][c] == D[a][c]):
            out.append(m)
    return out


def _sample_triples(n: int, rng: random.Random, k: int) -> list[tuple]:
    allt = n ** 3
    if allt <= k:
        return list(itertools.product(range(n), repeat=3))
    return [(rng.randrange(n), rng.randrange(n), rng.randrange(n)) for _ in range(k)]


def check_valid(spec: str, depth: int, seed: int = 0) -> CheckResult:
    L = parse_space(spec).level(depth)
    problems = validate(L.pocset)
    n = len(L.realization.vertices)
    ok = not problems and n == len(L.labels)
    return CheckResult("valid", spec, ok, f"{L.pocset.walls} walls, {n} vertices"
                       + (f", {problems[0]}" if problems else ""))


def check_median(spec: str, depth: int, seed: int = 0) -> CheckResult:
    X = parse_space(spec)
    R = X.level(depth).realization
    D = graph_distances(R)
    rng = random.Random(seed)
    bad = 0
    triples = _sample_triples(len(R.vertices), rng, 400)
    V = R.vertices
    for a, b, c in triples:
        m = R.index_of(median(V[a], V[b], V[c]))
        if betweenness_median(R, D, a, b, c) != [m]:
            bad += 1
    return CheckResult("median", spec, bad == 0, f"{len(triples)} triples, {bad} mismatches")


def check_dilworth(spec: str, depth: int, seed: int = 0) -> CheckResult:
    X = parse_space(spec)
    L = X.level(depth)
    R = L.realization
    r = rank(L.pocset, warn_above=None)
    rng = random.Random(seed)
    n = len(R.vertices)
    pairs = list(itertools.combinations(range(n), 2))
    if len(pairs) > 300:
        pairs = rng.sample(pairs, 300)
    worst = 0
    for i, j in pairs:
        k = len(chain_decomposition(L.pocset, R.vertices[i], R.vertices[j]))
        worst = max(worst, k)
    return CheckResult("dilworth", spec, worst <= r, f"max chains {worst}, rank {r}")


def _cocycle_cases(X, L):
    gens = [g for n, g in sorted(X.automorphisms().items()) if n != "id"]
    labels = list(L.labels)[:: max(1, len(L.labels) // 6)]
    return gens, labels


def check_norm(spec: str, depth: int, seed: int = 0) -> CheckResult:
    X = parse_space(spec)
    L = X.level(depth)
    gens, labels = _cocycle_cases(X, L)
    n = bad = 0
    for g in gens:
        for x in labels:
            try:
                b = haagerup_cocycle(g, L, x)
            except OutOfDomain:
                continue
            d = displacement(g, L, x)
            n += 1
            if b.norm2() != 2 * d or b.norm_p_p(1) != 2 * d:
                bad += 1
    return CheckResult("norm", spec, n > 0 and bad == 0, f"{n} cases, {bad} failures")


def check_cocycle(spec: str, depth: int, seed: int = 0) -> CheckResult:
    X = parse_space(spec)
    L = X.level(depth)
    gens, labels = _cocycle_cases(X, L)
    gens = gens + [g.inverse() for g in gens]
    n = bad = 0
    for g, h in itertools.product(gens, repeat=2):
        gh = g.compose(h)
        for x in labels:
            y = labels[0]
            try:
                lhs = haagerup_cocycle(gh, L, x)
                rhs = haagerup_cocycle(h, L, x).act(g) + haagerup_cocycle(g, L, x)
                cob = haagerup_cocycle(g, L, x) - haagerup_cocycle(g, L, y)
            except OutOfDomain:
                continue
            # b^x(g) - b^y(g) = (g - 1)(1_{sigma_x} - 1_{sigma_y})
            P = L.pocset
            diff = indicator(L, P.sides(L.vertex(x).bits)) - indicator(L, P.sides(L.vertex(y).bits))
            n += 1
            if lhs != rhs or cob != diff.act(g) - diff:
                bad += 1
    return CheckResult("cocycle", spec, n > 0 and bad == 0, f"{n} cases, {bad} failures")


def random_convex_set(R, rng: random.Random, upto: int = 3):
    k = rng.randint(1, upto)
    pts = [R.vertices[rng.randrange(len(R.vertices))] for _ in range(k)]
    return convex_hull(R, pts)


def check_bridge(spec: str, depth: int, seed: int = 0, pairs: int = 12) -> CheckResult:
    X = parse_space(spec)
    R = X.level(depth).realization
    rng = random.Random(seed)
    bad = 0
    for _ in range(pairs):
        C1 = random_convex_set(R, rng)
        C2 = random_convex_set(R, rng)
        try:
            shores_and_bridge(C1, C2, verify=True)
        except ConvexityError:
            bad += 1
    return CheckResult("bridge", spec, bad == 0, f"{pairs} pairs, {bad} failures")


UBS_CASES = (
    ("grid:dims=8x8,m=2", "corner", 8, 2, 0, 1),
    ("strip:n=8,w=2,m=2", "diagonal", 8, 1, 0, 2),
    ("line:n=8,m=2", "end", 8, 1, 0, 1),
)


def check_ubs(spec: str, xi: str, depth: int, vertices: int, edges: int, chains: int) -> CheckResult:
    X = parse_space(spec)
    om = U.sigma_difference(X, X.boundary(xi), None, depth)
    G = U.minimal_decomposition(om)
    ks = [len(U.is_strongly_reduced(v).chains) for v in G.vertices]
    srs = all(U.is_strongly_reduced(v).holds for v in G.vertices)
    ok = len(G.vertices) == vertices and len(G.edges) == edges and G.is_acyclic() and srs
    ok &= all(k == chains for k in ks)
    return CheckResult("ubs", spec, ok, f"{len(G.vertices)} vertices, {len(G.edges)} edges, chains {ks}")


def check_omega_c(spec: str, xi: str, depth: int, *_args) -> CheckResult:
    X = parse_space(spec)
    om = U.sigma_difference(X, X.boundary(xi), None, depth, check_stability=False)
    reps = [U.check_omega_c_bound(om, c) for c in (1, 2)]
    ok = all(r.holds for r in reps)
    detail = ", ".join(f"c={r.c}: {r.measure}<={r.bound}" for r in reps)
    return CheckResult("omega_c", spec, ok, detail)


def check_chi(spec: str, xi: str, depth: int, *_args) -> CheckResult:
    X = parse_space(spec)
    om = U.sigma_difference(X, X.boundary(xi), None, depth, check_stability=False)
    g = X.automorphism("shift")
    a = U.transfer_character(g, om)
    b = U.transfer_character(g.compose(g), om)
    c = U.transfer_character(g.inverse(), om)
    ok = b == 2 * a and c == -a
    return CheckResult("chi", spec, ok, f"chi(shift)={a}, chi(shift^2)={b}, chi(shift^-1)={c}")


def _tasks(seed: int) -> list[tuple]:
    tasks = []
    for spec, depth in CORPUS:
        for fn in (check_valid, check_median, check_dilworth, check_norm, check_cocycle, check_bridge):
            tasks.append((fn, (spec, depth, seed)))
    for case in UBS_CASES:
        for fn in (check_ubs, check_omega_c, check_chi):
            tasks.append((fn, case))
    return tasks


def _run(task):
    fn, args = task
    try:
        return fn(*args)
    except Exception as exc:  # a crash is a failed invariant, reported in order
        return CheckResult(fn.__name__.removeprefix("check_"), str(args[0]), False,
                           f"{type(exc).__name__}: {exc}")


def run_selftest(seed: int = 0, jobs: int = 1) -> list[CheckResult]:
    tasks = _tasks(seed)
    if jobs <= 1:
        return [_run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run, tasks))


def report(results: list[CheckResult]) -> str:
    lines = [r.line() for r in results]
    failed = sum(not r.ok for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
