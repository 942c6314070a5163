"""Boundary sets of halfspaces toward a boundary point, at finite depth.

Everything here works on one truncation of a growing complex.  Depth
effects are kept honest with three *bands* of halfspaces, by the depth at
which their wall first appears:

* inner  (birth <= n // 3): the bounded neighbourhood of the basepoint,
* middle (n // 3 < birth <= 2n // 3): far from the basepoint, safe from clipping,
* outer  (birth > 2n // 3): the horizon, where truncation artefacts live.

A set *contains a diverging chain* when some middle-band member strictly
contains some outer-band member, so a nested run reaches the horizon from
well inside.  Two sets are *equivalent* when their symmetric difference
avoids the middle band; the outer band is never used as evidence.  All
reports carry the depth and, where it makes sense, the same quantity one
depth lower.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx

from .pocset import (
    Ultrafilter,
    WeightedPocset,
    ids_of,
    inseparable_closure_mask,
    iter_bits,
    mask_of,
    minimal_chain_cover,
    rank as pocset_rank,
    swap_sides,
)
from .spaces import (
    Automorphism,
    BoundaryPoint,
    GrowingComplex,
    Level,
    OutOfDomain,
)

__all__ = [
    "BoundaryPoint", "UBS", "UBSGraph", "UBSError", "DepthTooSmall", "MIN_DEPTH",
    "sigma_difference", "minimal_decomposition", "reduce", "is_strongly_reduced",
    "strongly_reduce", "alpha", "omega_c", "check_omega_c_bound", "transfer_character",
    "ubs_to_vertex", "construct_xK", "power_stabilization_check", "alpha_table", "classify_subsets",
]

MIN_DEPTH = 6


class UBSError(ValueError):
    pass


class DepthTooSmall(UBSError):
    def __init__(self, depth: int, minimum: int = MIN_DEPTH):
        super().__init__(f"depth too small: {depth} < minimum usable depth {minimum}")
        self.depth = depth
        self.minimum = minimum


# ----------------------------------------------------------------------
# bands


@dataclass(frozen=True)
class Bands:
    inner: int
    middle: int
    outer: int

    @property
    def reliable(self) -> int:
        return self.inner | self.middle


def bands(level: Level) -> Bands:
    n = level.depth
    lo, hi = n // 3, (2 * n) // 3
    inner = middle = outer = 0
    for w, b in enumerate(level.births):
        m = 3 << (2 * w)
        if b <= lo:
            inner |= m
        elif b <= hi:
            middle |= m
        else:
            outer |= m
    return Bands(inner, middle, outer)


def require_depth(level: Level) -> None:
    if level.depth < MIN_DEPTH:
        raise DepthTooSmall(level.depth)


def has_diverging_chain(P: WeightedPocset, B: Bands, mask: int) -> bool:
    """Some middle-band member strictly contains some outer-band member."""
    mid = mask & B.middle
    if not mid:
        return False
    for h in iter_bits(mask & B.outer):
        if P.up[h] & mid & ~(1 << h):
            return True
    return False


# ----------------------------------------------------------------------
# the UBS type


@dataclass(frozen=True, eq=False)
class UBS:
    """A halfspace subset of ``sigma_xi \\ sigma_x`` at one depth."""

    level: Level
    xi: BoundaryPoint
    base: Ultrafilter
    mask: int
    complex: GrowingComplex | None = None
    stable: bool | None = None

    @property
    def pocset(self) -> WeightedPocset:
        return self.level.pocset

    @property
    def depth(self) -> int:
        return self.level.depth

    @cached_property
    def bands(self) -> Bands:
        return bands(self.level)

    @cached_property
    def base_sides(self) -> int:
        return self.pocset.sides(self.base.bits)

    @cached_property
    def xi_sides(self) -> int:
        return self.pocset.sides(self.xi.at(self.level).bits)

    def members(self) -> list[int]:
        return ids_of(self.mask)

    def __contains__(self, h: int) -> bool:
        return bool((self.mask >> h) & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __eq__(self, other):
        return isinstance(other, UBS) and self.mask == other.mask and self.level is other.level

    def __hash__(self):
        return hash((id(self.level), self.mask))

    @property
    def measure(self) -> Fraction:
        return self.pocset.measure(self.mask)

    def restrict(self, mask: int) -> "UBS":
        return replace(self, mask=mask & self.mask, stable=None)

    def with_mask(self, mask: int) -> "UBS":
        return replace(self, mask=mask, stable=None)

    def distance_to(self, h: int) -> Fraction:
        """``d(x, h)``: weight of the halfspaces containing ``h`` but not ``x``."""
        return self.pocset.measure(self.pocset.up[h] & ~self.base_sides)

    @cached_property
    def distances(self) -> dict:
        return {h: self.distance_to(h) for h in self.members()}

    def radius(self, mask: int) -> Fraction:
        """Largest ``d(x, h)`` over ``mask`` (0 when empty)."""
        return max((self.distance_to(h) for h in iter_bits(mask)), default=Fraction(0))

    def is_inseparable(self) -> bool:
        return inseparable_closure_mask(self.pocset, self.mask) == self.mask

    def has_diverging_chain(self, mask: int | None = None) -> bool:
        return has_diverging_chain(self.pocset, self.bands, self.mask if mask is None else mask)

    def is_ubs(self) -> bool:
        return (self.mask & ~(self.xi_sides & ~self.base_sides)) == 0 and self.is_inseparable() \
            and self.has_diverging_chain()

    @cached_property
    def chains(self) -> list[list[int]]:
        return minimal_chain_cover(self.pocset, self.members())

    def keys(self) -> list:
        return [self.level.hkey(h) for h in self.members()]


def _resolve_vertex(level: Level, x) -> Ultrafilter:
    if x is None:
        return level.base
    if isinstance(x, Ultrafilter):
        return x
    return level.vertex(x)


def sigma_difference(X: GrowingComplex, xi: BoundaryPoint, x=None, n: int | None = None,
                     check_stability: bool = True) -> UBS:
    """Exact ``sigma_xi \\ sigma_x`` at depth ``n``, with a stability flag.

    ``x`` is a vertex label, an :class:`Ultrafilter` of the level, or None for
    the basepoint.  The flag compares against depth ``n - 1`` on shared walls.
    """
    level = X.level(n)
    u = _resolve_vertex(level, x)
    P = level.pocset
    mask = P.sides(xi.at(level).bits) & ~P.sides(u.bits)
    stable = None
    if check_stability and level.depth >= 1 and not isinstance(x, Ultrafilter):
        prev = X.level(level.depth - 1)
        try:
            v = _resolve_vertex(prev, x)
        except OutOfDomain:
            v = None
        if v is not None:
            pm = prev.pocset.sides(xi.at(prev).bits) & ~prev.pocset.sides(v.bits)
            mapped = mask_of(level.hid(prev.hkey(h)) for h in iter_bits(pm))
            shared = mask_of(level.hid(prev.hkey(h)) for h in range(prev.pocset.size))
            stable = mapped == (mask & shared)
    return UBS(level, xi, u, mask, X, stable)


# ----------------------------------------------------------------------
# equivalence


@dataclass(frozen=True)
class Comparison:
    holds: bool
    difference: int
    radius: Fraction


def almost_contained(A: UBS, B: UBS) -> Comparison:
    """``A \\ B`` avoids the middle band; reports the radius of ``A \\ B`` near the basepoint."""
    diff = A.mask & ~B.mask
    ok = not diff & A.bands.middle
    return Comparison(ok, diff, A.radius(diff & A.bands.inner))


def equivalent(A: UBS, B: UBS) -> Comparison:
    diff = A.mask ^ B.mask
    ok = not diff & A.bands.middle
    return Comparison(ok, diff, A.radius(diff & A.bands.inner))


# ----------------------------------------------------------------------
# minimal decomposition and the graph of minimal classes


@dataclass(frozen=True)
class UBSGraph:
    """Minimal classes of UBS's inside ``omega`` and the transversality digraph."""

    omega: UBS
    vertices: tuple          # representative UBS per class
    anchors: tuple           # outer-band halfspace defining each representative
    chains: tuple            # one representative chain per class
    edges: tuple             # (i, j) pairs
    residual: int            # omega minus the union of representatives
    residual_radius: Fraction
    residual_stable: bool | None

    @property
    def digraph(self) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from(range(len(self.vertices)))
        G.add_edges_from(self.edges)
        return G

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.digraph)

    def to_json_dict(self) -> dict:
        L = self.omega.level
        return {
            "depth": L.depth,
            "vertices": [{"anchor": a, "size": len(v), "measure": str(v.measure),
                          "chain": list(c)} for a, v, c in zip(self.anchors, self.vertices, self.chains)],
            "edges": [list(e) for e in self.edges],
            "residual": ids_of(self.residual),
            "residual_radius": str(self.residual_radius),
            "residual_stable": self.residual_stable,
        }


def _minimal_classes(omega: UBS) -> list[tuple[int, int]]:
    """(anchor, mask) per minimal class, anchors ascending."""
    P = omega.pocset
    B = omega.bands
    om = omega.mask
    outer_min = [h for h in iter_bits(om & B.outer) if not (P.strict_down[h] & om)]
    cands = {}
    for h in outer_min:
        U = P.up[h] & om
        if has_diverging_chain(P, B, U):
            cands[h] = U

    def below(a: int, b: int) -> bool:
        return not (cands[a] & ~cands[b]) & B.middle

    minimal = [a for a in cands if all(below(a, b) for b in cands if below(b, a))]
    classes: list[list[int]] = []
    for a in sorted(minimal):
        for cl in classes:
            if below(a, cl[0]) and below(cl[0], a):
                cl.append(a)
                break
        else:
            classes.append([a])
    return [(cl[0], cands[cl[0]]) for cl in classes]


def _chain_through(P: WeightedPocset, mask: int, h: int) -> list[int]:
    for ch in minimal_chain_cover(P, ids_of(mask)):
        if h in ch:
            return ch
    raise AssertionError("anchor missing from its own chain cover")


def _all_transverse(P: WeightedPocset, A: Iterable[int], B: Iterable[int]) -> bool:
    B = list(B)
    return all(P.transverse(a, b) for a in A for b in B)


def minimal_decomposition(omega: UBS, check_stability: bool = True) -> UBSGraph:
    """Minimal classes almost contained in ``omega`` and the edges between them.

    Candidates are ``{k in omega : h <= k}`` for the minimal outer-band
    members ``h``; candidates not almost containing any inequivalent
    candidate are the minimal classes.  An edge ``i -> j`` is drawn when
    every middle-band halfspace of chain ``i`` is transverse to every
    outer-band halfspace of chain ``j``, but not the other way round.
    """
    require_depth(omega.level)
    P = omega.pocset
    B = omega.bands
    cls = _minimal_classes(omega)
    reps = tuple(omega.with_mask(m) for _, m in cls)
    anchors = tuple(a for a, _ in cls)
    chains = tuple(tuple(_chain_through(P, m, a)) for a, m in cls)
    edges = []
    for i, j in itertools.permutations(range(len(cls)), 2):
        mid_i = [h for h in chains[i] if (B.middle >> h) & 1]
        out_j = [h for h in chains[j] if (B.outer >> h) & 1]
        mid_j = [h for h in chains[j] if (B.middle >> h) & 1]
        out_i = [h for h in chains[i] if (B.outer >> h) & 1]
        if _all_transverse(P, mid_i, out_j) and not _all_transverse(P, mid_j, out_i):
            edges.append((i, j))
    union = 0
    for r in reps:
        union |= r.mask
    residual = omega.mask & ~union
    radius = omega.radius(residual)
    stable = None
    if check_stability and omega.complex is not None and omega.depth - 1 >= MIN_DEPTH:
        try:
            prev = sigma_difference(omega.complex, omega.xi, omega.level.label(omega.base),
                                    omega.depth - 1, check_stability=False)
            pg = minimal_decomposition(prev, check_stability=False)
            stable = pg.residual_radius == radius and len(pg.vertices) == len(reps)
        except (OutOfDomain, UBSError):
            stable = None
    return UBSGraph(omega, reps, anchors, chains, tuple(edges), residual, radius, stable)


# ----------------------------------------------------------------------
# reduced and strongly reduced


def transverse_mask(P: WeightedPocset, h: int, within: int) -> int:
    row = P.nested_mask[h]
    out = 0
    for k in iter_bits(within):
        if not (row >> k) & 1:
            out |= 1 << k
    return out


@dataclass(frozen=True)
class Reduction:
    ubs: UBS
    removed: int
    radius: Fraction


def reduce(omega: UBS) -> Reduction:
    """Drop every halfspace transverse to a diverging chain inside ``omega``."""
    require_depth(omega.level)
    P = omega.pocset
    removed = 0
    for h in omega.members():
        T = transverse_mask(P, h, omega.mask)
        if has_diverging_chain(P, omega.bands, T):
            removed |= 1 << h
    kept = omega.with_mask(omega.mask & ~removed)
    return Reduction(kept, removed, omega.radius(removed))


@dataclass(frozen=True)
class StrongReduction:
    holds: bool
    chains: tuple
    offending: tuple


def is_strongly_reduced(omega: UBS) -> StrongReduction:
    """Minimum chain cover; strongly reduced iff every chain is diverging."""
    require_depth(omega.level)
    if not omega.has_diverging_chain():
        raise DepthTooSmall(omega.depth, omega.depth + 1)
    P = omega.pocset
    chains = omega.chains
    bad = [c for c in chains if not has_diverging_chain(P, omega.bands, mask_of(c))]
    return StrongReduction(not bad, tuple(tuple(c) for c in chains),
                           tuple(sorted(h for c in bad for h in c)))


def strongly_reduce(omega: UBS) -> tuple[UBS, Fraction]:
    """Smallest distance cut ``D`` leaving a strongly reduced UBS ``{h : d(x,h) > D}``."""
    require_depth(omega.level)
    dist = omega.distances
    cuts = [Fraction(-1)] + sorted({d for h, d in dist.items() if not (omega.bands.outer >> h) & 1})
    for D in cuts:
        m = mask_of(h for h, d in dist.items() if d > D)
        cand = omega.with_mask(m)
        if not cand.has_diverging_chain() or not cand.is_inseparable():
            continue
        if is_strongly_reduced(cand).holds:
            return cand, D
    raise UBSError("no distance cut yields a strongly reduced UBS at this depth")


# ----------------------------------------------------------------------
# alpha and the sublevel sets


def alpha(omega: UBS, h: int) -> Fraction:
    """Weight of the members of ``omega`` containing ``h`` (``h`` itself included)."""
    if h not in omega:
        raise UBSError(f"halfspace {h} is not in the UBS")
    P = omega.pocset
    return P.measure(P.up[h] & omega.mask)


def alpha_map(omega: UBS) -> dict:
    return {h: alpha(omega, h) for h in omega.members()}


def omega_c(omega: UBS, c) -> UBS:
    c = Fraction(c)
    return omega.with_mask(mask_of(h for h, a in alpha_map(omega).items() if a <= c))


def alpha_table(omega: UBS) -> list[tuple]:
    """Rows ``(halfspace, d(x,h), alpha, chain index)`` in ascending halfspace order."""
    chain_of = {}
    for i, ch in enumerate(omega.chains):
        for h in ch:
            chain_of[h] = i
    return [(h, omega.distance_to(h), alpha(omega, h), chain_of[h]) for h in omega.members()]


@dataclass(frozen=True)
class OmegaCReport:
    c: Fraction
    measure: Fraction
    rank: int
    bound: Fraction
    holds: bool
    applicable: bool          # c < weight of omega below the horizon
    complement_inseparable: bool
    complement_has_chain: bool


def check_omega_c_bound(omega: UBS, c, r: int | None = None) -> OmegaCReport:
    """Weight of ``omega_c`` against ``r * c``; structure of ``omega \\ omega_c``."""
    c = Fraction(c)
    if r is None:
        r = omega.complex.declared_rank if omega.complex is not None else pocset_rank(omega.pocset)
    oc = omega_c(omega, c)
    rest = omega.with_mask(omega.mask & ~oc.mask)
    # alpha reaching the horizon means c is beyond what this depth can see
    horizon_alpha = min((alpha(omega, h) for h in iter_bits(omega.mask & omega.bands.outer)),
                        default=Fraction(0))
    applicable = c < horizon_alpha
    return OmegaCReport(c, oc.measure, r, r * c, oc.measure <= r * c, applicable,
                        rest.is_inseparable() if rest.mask else True,
                        rest.has_diverging_chain())


# ----------------------------------------------------------------------
# automorphisms acting on boundary sets


def fixes_boundary(g: Automorphism, xi: BoundaryPoint, level: Level) -> bool:
    """Checked on abstract keys, so images beyond the truncation count too."""
    for key in level.wall_keys:
        s = xi.side(key)
        k2, s2 = g.fwd((key, s))
        if xi.side(k2) != s2:
            return False
    return True


def push(level: Level, g: Automorphism, mask: int, within: int | None = None) -> tuple[int, int]:
    """Image of ``mask`` under ``g`` and the members whose image left the level.

    Only members in ``within`` are pushed when given.
    """
    img = undefined = 0
    src = mask if within is None else mask & within
    for h in iter_bits(src):
        k = g.map_halfspace(level, h)
        if k is None:
            undefined |= 1 << h
        else:
            img |= 1 << k
    return img, undefined


@dataclass(frozen=True)
class TransferReport:
    value: Fraction
    radius: Fraction
    depth: int
    stable: bool | None


def _margin_error(level: Level, g: Automorphism, undefined: int) -> OutOfDomain:
    keys = [level.hkey(h) for h in iter_bits(undefined)][:3]
    return OutOfDomain(f"{g.name} moves {keys} outside depth {level.depth}; "
                       f"add a backward margin to the generator")


def transfer_report(g: Automorphism, omega: UBS, check_stability: bool = True) -> TransferReport:
    """``chi(g) = weight(omega \\ g omega) - weight(g omega \\ omega)`` away from the horizon.

    This equals the weight of ``g^-1 omega \\ omega`` minus that of
    ``omega \\ g^-1 omega`` because ``g`` preserves weights.
    """
    level = omega.level
    require_depth(level)
    B = omega.bands
    img, undefined = push(level, g, omega.mask)
    if undefined & B.reliable:
        raise _margin_error(level, g, undefined & B.reliable)
    lost = omega.mask & ~img & B.reliable
    gained = img & ~omega.mask & B.reliable
    if (lost | gained) & B.middle:
        raise UBSError(f"{g.name} does not fix the class of this UBS at depth {level.depth}")
    P = omega.pocset
    value = P.measure(lost) - P.measure(gained)
    radius = omega.radius(lost | gained)
    stable = None
    if check_stability and omega.complex is not None and level.depth - 1 >= MIN_DEPTH:
        try:
            prev = _same_ubs_at(omega, level.depth - 1)
            stable = transfer_report(g, prev, check_stability=False).value == value
        except (OutOfDomain, UBSError):
            stable = None
    return TransferReport(value, radius, level.depth, stable)


def transfer_character(g: Automorphism, omega: UBS) -> Fraction:
    return transfer_report(g, omega).value


def _same_ubs_at(omega: UBS, n: int) -> UBS:
    """The same set of abstract halfspaces, viewed at depth ``n``."""
    X = omega.complex
    L = X.level(n)
    base = _resolve_vertex(L, omega.level.label(omega.base))
    keys = set(omega.keys())
    mask = mask_of(h for h in range(L.pocset.size) if L.hkey(h) in keys)
    return UBS(L, omega.xi, base, mask, X)


# ----------------------------------------------------------------------
# points from boundary sets


def ubs_to_vertex(xi_set: UBS, verify: bool = True) -> Ultrafilter:
    """The vertex ``y`` whose ``sigma_xi \\ sigma_y`` is the given set.

    Flips every member of the set off the side chosen by the boundary point
    and checks the result is an ultrafilter of the level.
    """
    P = xi_set.pocset
    sx = xi_set.xi_sides
    if xi_set.mask & ~sx:
        raise UBSError("set is not inside sigma_xi")
    sigma = (sx & ~xi_set.mask) | swap_sides(xi_set.mask, P.walls)
    if not P.is_ultrafilter_sides(sigma):
        raise UBSError("flipping the set does not give an ultrafilter at this depth")
    y = Ultrafilter(P.bits_of_sides(sigma), P.walls)
    if verify:
        back = sx & ~P.sides(y.bits)
        if back != xi_set.mask:
            raise UBSError("recovered vertex does not reproduce the set")
    return y


# ----------------------------------------------------------------------
# the point x_K


@dataclass(frozen=True)
class XKResult:
    x_K: Ultrafilter
    label: object
    pieces: tuple            # UBS per minimal class, relative to x_K
    characters: dict         # (piece index, generator name) -> chi
    cuts: tuple              # strongly-reducing distance cut per class
    threshold: Fraction      # distance threshold where every condition first held
    c_values: tuple          # sublevel cut per piece
    depth: int

    def to_json_dict(self) -> dict:
        return {
            "depth": self.depth,
            "x_K": repr(self.label),
            "threshold": str(self.threshold),
            "c": [str(c) for c in self.c_values],
            "pieces": [p.members() for p in self.pieces],
            "characters": {f"{i}:{g}": str(v) for (i, g), v in sorted(self.characters.items())},
        }


def _contained_image(level: Level, g: Automorphism, A: int, B: Bands) -> bool | None:
    """``g A inside A`` on the reliable band; None when images are missing."""
    img, undefined = push(level, g, A, within=B.reliable)
    if undefined:
        return None
    return not (img & B.reliable & ~A)


def construct_xK(omega: UBS, gens: Sequence[Automorphism]) -> XKResult:
    """Assemble ``x_K`` and its pieces from ``omega = sigma_xi \\ sigma_x``.

    Each minimal class is reduced, cut to a strongly reduced set, and then a
    common distance threshold ``T`` is searched: piece ``i`` keeps the members
    whose ``alpha`` exceeds the largest ``alpha`` at distance ``<= T``.  The
    first ``T`` at which every piece is moved into itself (or out of itself,
    by the sign of its character), the pieces are cross-disjoint under every
    generator, and their union flips to an ultrafilter, is reported.
    """
    level = omega.level
    require_depth(level)
    gens = [g for g in gens if g.name != "id"]
    for g in gens:
        if not fixes_boundary(g, omega.xi, level):
            raise UBSError(f"{g.name} does not fix the boundary point")
    graph = minimal_decomposition(omega, check_stability=False)
    B = omega.bands
    pieces0 = []
    cuts = []
    for rep in graph.vertices:
        for g in gens:
            img, undefined = push(level, g, rep.mask, within=B.reliable)
            if undefined:
                raise _margin_error(level, g, undefined)
            if (img ^ rep.mask) & B.middle:
                raise UBSError(f"{g.name} does not fix a minimal class")
        red = reduce(rep).ubs
        sr, D = strongly_reduce(red)
        pieces0.append(sr)
        cuts.append(D)
    chis = {}
    for i, p in enumerate(pieces0):
        for g in gens:
            chis[(i, g.name)] = transfer_report(g, p, check_stability=False).value
    dist_all = sorted({d for p in pieces0 for h, d in p.distances.items() if (B.reliable >> h) & 1})
    for T in [Fraction(-1)] + dist_all:
        cs = []
        parts = []
        for p in pieces0:
            am = alpha_map(p)
            c = max((am[h] for h, d in p.distances.items() if d <= T), default=Fraction(0))
            cs.append(c)
            parts.append(mask_of(h for h, a in am.items() if a > c))
        if not _pieces_ok(level, gens, parts, chis, B):
            continue
        union = 0
        for m in parts:
            union |= m
        cand = omega.with_mask(union)
        if not cand.is_inseparable():
            continue
        try:
            y = ubs_to_vertex(cand)
        except UBSError:
            continue
        pieces = tuple(UBS(level, omega.xi, y, m, omega.complex) for m in parts)
        if not all(p.has_diverging_chain() for p in pieces):
            continue
        return XKResult(y, level.label(y), pieces, chis, tuple(cuts), T, tuple(cs), level.depth)
    raise UBSError(f"no threshold works at depth {level.depth}; try a larger depth")


def _pieces_ok(level: Level, gens, parts: list[int], chis: dict, B: Bands) -> bool:
    for i, m in enumerate(parts):
        for g in gens:
            chi = chis[(i, g.name)]
            if chi >= 0 and _contained_image(level, g, m, B) is not True:
                return False
            if chi <= 0 and _contained_image(level, g.inverse(), m, B) is not True:
                return False
    for (i, a), (j, b) in itertools.permutations(enumerate(parts), 2):
        if a & b & B.reliable:
            return False
        for g in gens:
            img, _ = push(level, g, b, within=B.reliable)
            if img & a & B.reliable:
                return False
    return True


# ----------------------------------------------------------------------
# power stabilization


@dataclass(frozen=True)
class PowerReport:
    chi: Fraction
    direction: int           # +1 checked g, -1 checked g^-1
    power: int               # r!
    omega1: int
    omega2: int
    halfspaces_shrink: bool  # g^{r!} h inside h on omega_1 (equal when chi = 0)
    omega1_invariant: bool   # g^{r!} omega_1 inside omega_1 (equal when chi = 0)
    omega2_invariant: bool   # g omega_2 inside omega_2 (equal when chi = 0)
    checked: int
    depth: int

    @property
    def holds(self) -> bool:
        return self.halfspaces_shrink and self.omega1_invariant and self.omega2_invariant


def power_stabilization_check(g: Automorphism, omega: UBS, r: int | None = None) -> PowerReport:
    """``Omega_1 = meet of g^-i Omega`` (0 <= i <= r) and ``Omega_2 = meet of g^(i-1) Omega_1``.

    For negative character the check runs on ``g^-1``.  Only halfspaces in
    the reliable band whose needed images all exist are tested; the count
    is reported.
    """
    level = omega.level
    require_depth(level)
    if r is None:
        r = omega.complex.declared_rank if omega.complex is not None else pocset_rank(omega.pocset)
    chi = transfer_character(g, omega)
    direction = 1
    if chi < 0:
        g = g.inverse()
        direction = -1
    B = omega.bands
    P = omega.pocset
    R = math.factorial(r)
    G = g.power(R)

    def orbit(h: int, f: Automorphism, k: int) -> list[int] | None:
        out = [h]
        for _ in range(k):
            h2 = f.map_halfspace(level, out[-1])
            if h2 is None:
                return None
            out.append(h2)
        return out

    def in_omega1(h: int) -> bool | None:
        orb = orbit(h, g, r)
        if orb is None:
            return None
        return all((omega.mask >> k) & 1 for k in orb)

    omega1 = 0
    for h in omega.members():
        if in_omega1(h):
            omega1 |= 1 << h
    ginv = g.inverse()

    def in_omega2(h: int) -> bool | None:
        orb = orbit(h, ginv, R - 1)
        if orb is None:
            return None
        flags = [in_omega1(k) for k in orb]
        if any(f is None for f in flags):
            return None
        return all(flags)

    omega2 = 0
    for h in iter_bits(omega1):
        if in_omega2(h):
            omega2 |= 1 << h
    shrink = inv1 = inv2 = True
    checked = 0
    for h in iter_bits(omega1 & B.reliable):
        Gh = G.map_halfspace(level, h)
        if Gh is None or not (B.reliable >> Gh) & 1:
            continue
        checked += 1
        if chi == 0:
            shrink &= Gh == h
        else:
            shrink &= P.leq(Gh, h)
        m1 = in_omega1(Gh)
        inv1 &= m1 is not False
        if chi == 0:
            back = G.inverse().map_halfspace(level, h)
            if back is not None and (B.reliable >> back) & 1:
                inv1 &= in_omega1(back) is not False
    for h in iter_bits(omega2 & B.reliable):
        gh = g.map_halfspace(level, h)
        if gh is None or not (B.reliable >> gh) & 1:
            continue
        m2 = in_omega2(gh)
        if m2 is None:
            continue
        inv2 &= m2
        if chi == 0:
            back = ginv.map_halfspace(level, h)
            if back is not None and (B.reliable >> back) & 1:
                m3 = in_omega2(back)
                inv2 &= m3 is not False
    return PowerReport(chi, direction, R, omega1, omega2, shrink, inv1, inv2, checked, level.depth)


# ----------------------------------------------------------------------
# exhaustive classing


def classify_subsets(omega: UBS, limit: int = 1 << 16) -> dict:
    """Inseparable chain-bearing subsets of ``omega`` grouped by the minimal
    classes in which they carry a diverging chain.

    Returns ``{signature: count}`` with signatures as sorted tuples of
    class indices.  Two subsets with the same signature differ by a set
    without diverging chains, which is the finite reading of equivalence.
    """
    require_depth(omega.level)
    members = omega.members()
    if (1 << len(members)) > limit:
        raise UBSError(f"{len(members)} halfspaces is too many to enumerate (limit {limit} subsets)")
    G = minimal_decomposition(omega, check_stability=False)
    P = omega.pocset
    B = omega.bands
    out: dict = {}
    for bits in range(1, 1 << len(members)):
        m = 0
        for i, h in enumerate(members):
            if (bits >> i) & 1:
                m |= 1 << h
        if inseparable_closure_mask(P, m) != m or not has_diverging_chain(P, B, m):
            continue
        sig = tuple(i for i, rep in enumerate(G.vertices) if has_diverging_chain(P, B, m & rep.mask))
        out[sig] = out.get(sig, 0) + 1
    return out
