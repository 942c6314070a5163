"""Convex subcomplexes of a finite median realization.

Convex sets are stored as sets of vertex indices of a
:class:`~mediankit.pocset.MedianRealization`.  Every finite convex set is an
intersection of halfspaces, so most questions reduce to word operations on
the AND/OR of member bits: a wall crosses ``C`` exactly where those differ.
"""
from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .pocset import (
    MedianRealization,
    PocsetError,
    Ultrafilter,
    WeightedPocset,
    distance,
    in_interval,
    iter_bits,
    median,
    swap_sides,
)


class ConvexityError(ValueError):
    pass


def _wall_weight_sum(P: WeightedPocset, walls: int) -> Fraction:
    uw = P.uniform_weight
    if uw is not None:
        return uw * bin(walls).count("1")
    return sum((P.weights[w] for w in iter_bits(walls)), Fraction(0))


@dataclass(frozen=True, eq=False)
class ConvexSet:
    """A vertex subset together with its halfspace trichotomy."""

    realization: MedianRealization
    members: frozenset

    def __post_init__(self):
        if not self.members:
            raise ConvexityError("convex sets must be nonempty")

    @property
    def pocset(self) -> WeightedPocset:
        return self.realization.pocset

    @cached_property
    def _and_or(self) -> tuple[int, int]:
        V = self.realization.vertices
        full = (1 << self.pocset.walls) - 1
        a, o = full, 0
        for i in self.members:
            a &= V[i].bits
            o |= V[i].bits
        return a, o

    @cached_property
    def crossing_walls(self) -> int:
        """Bitmask of walls with members on both sides."""
        a, o = self._and_or
        return o & ~a

    @cached_property
    def inside(self) -> int:
        """Halfspace mask of ``sigma_C``: halfspaces containing every member."""
        a, _ = self._and_or
        out = 0
        for w in range(self.pocset.walls):
            if not (self.crossing_walls >> w) & 1:
                out |= 1 << (2 * w + ((a >> w) & 1))
        return out

    @cached_property
    def outside(self) -> int:
        """Halfspaces disjoint from ``C``."""
        return swap_sides(self.inside, self.pocset.walls)

    @cached_property
    def crossing(self) -> int:
        """Halfspace mask of both sides of every crossing wall."""
        out = 0
        for w in iter_bits(self.crossing_walls):
            out |= 3 << (2 * w)
        return out

    def __contains__(self, u: Ultrafilter) -> bool:
        i = self.realization.index.get(u.bits)
        return i is not None and i in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __eq__(self, other):
        return isinstance(other, ConvexSet) and self.members == other.members

    def __hash__(self):
        return hash(self.members)

    def vertices(self) -> list[Ultrafilter]:
        V = self.realization.vertices
        return [V[i] for i in sorted(self.members)]

    def is_convex(self) -> bool:
        """Interval-closure check, independent of the halfspace description."""
        vs = self.vertices()
        for a, b in itertools.combinations(vs, 2):
            for v in self.realization.vertices:
                if in_interval(a, b, v) and v not in self:
                    return False
        return True


def convex_set(R: MedianRealization, vertices: Iterable[Ultrafilter]) -> ConvexSet:
    """Wrap vertices that are already known to be convex."""
    return ConvexSet(R, frozenset(R.index_of(v) for v in vertices))


def convex_hull(R: MedianRealization, S: Iterable[Ultrafilter]) -> ConvexSet:
    """Smallest convex set containing ``S``: all vertices agreeing with ``S`` off its crossing walls."""
    S = list(S)
    if not S:
        raise ConvexityError("convex hull of an empty set")
    full = (1 << R.pocset.walls) - 1
    a, o = full, 0
    for u in S:
        a &= u.bits
        o |= u.bits
    fixed = full & ~(o & ~a)
    members = frozenset(i for i, v in enumerate(R.vertices) if not (v.bits ^ a) & fixed)
    return ConvexSet(R, members)


def hull_by_intervals(R: MedianRealization, S: Iterable[Ultrafilter]) -> ConvexSet:
    """Interval-closure iteration; slow reference for :func:`convex_hull`."""
    cur = {R.index_of(u) for u in S}
    if not cur:
        raise ConvexityError("convex hull of an empty set")
    V = R.vertices
    changed = True
    while changed:
        changed = False
        members = sorted(cur)
        for i, j in itertools.combinations(members, 2):
            for k, v in enumerate(V):
                if k not in cur and in_interval(V[i], V[j], v):
                    cur.add(k)
                    changed = True
    return ConvexSet(R, frozenset(cur))


def halfspace_set(R: MedianRealization, h: int) -> ConvexSet:
    """The vertices lying in halfspace ``h``."""
    return ConvexSet(R, frozenset(i for i, v in enumerate(R.vertices) if v.contains(h)))


def gate(x: Ultrafilter, C: ConvexSet, check: bool = False) -> Ultrafilter:
    """Gate-projection of ``x`` to ``C``.

    Keeps ``x``'s side on walls crossing ``C`` and ``C``'s side elsewhere.
    With ``check`` the result is compared against the unique nearest point
    and the separating-wall identity.
    """
    a, _ = C._and_or
    cw = C.crossing_walls
    g = Ultrafilter((x.bits & cw) | (a & ~cw), x.walls)
    if check:
        if g not in C:
            raise ConvexityError("gate left the convex set; input is not convex")
        P = C.pocset
        dists = [(distance(P, x, v), v.bits) for v in C.vertices()]
        best = min(dists)[0]
        nearest = [b for d, b in dists if d == best]
        if nearest != [g.bits]:
            raise ConvexityError("nearest point is not unique or disagrees with the gate")
        if (x.bits ^ g.bits) != ((x.bits ^ a) & ~cw):
            raise ConvexityError("walls separating x from C differ from those separating x from its gate")
    return g


def pair_of_gates(C1: ConvexSet, C2: ConvexSet) -> tuple[Ultrafilter, Ultrafilter]:
    """Points ``x1 in C1``, ``x2 in C2`` that are each other's gates."""
    z = C1.vertices()[0]
    x1 = gate(gate(z, C2), C1)
    x2 = gate(x1, C2)
    if gate(x2, C1) != x1:
        raise ConvexityError("gates do not pair up")
    return x1, x2


def separating_walls(C1: ConvexSet, C2: ConvexSet) -> int:
    """Wall mask of ``W(C1|C2)``: walls with ``C1`` and ``C2`` on opposite sides."""
    a1, _ = C1._and_or
    a2, _ = C2._and_or
    free = ~(C1.crossing_walls | C2.crossing_walls)
    return (a1 ^ a2) & free & ((1 << C1.pocset.walls) - 1)


@dataclass(frozen=True)
class Bridge:
    """Shores, bridge and the product witness ``B -> S1 x I(x1, x2)``."""

    shore1: ConvexSet
    shore2: ConvexSet
    bridge: ConvexSet
    gates: tuple
    witness: dict  # bridge vertex -> (shore vertex, interval vertex)
    walls_bridge: int
    walls_common: int
    walls_separating: int

    def wall_identity_holds(self) -> bool:
        return (self.walls_common & self.walls_separating == 0
                and self.walls_common | self.walls_separating == self.walls_bridge)

    @property
    def interval(self) -> list:
        return sorted({iv for _, iv in self.witness.values()})

    def to_json_dict(self) -> dict:
        R = self.bridge.realization
        idx = R.index_of
        return {
            "gates": [idx(g) for g in self.gates],
            "shore1": sorted(self.shore1.members),
            "shore2": sorted(self.shore2.members),
            "bridge": sorted(self.bridge.members),
            "witness": [[idx(Ultrafilter(b, R.pocset.walls)), s, i]
                        for b, (s, i) in sorted(self.witness.items(), key=lambda t: idx(
                            Ultrafilter(t[0], R.pocset.walls)))],
            "walls_bridge": sorted(iter_bits(self.walls_bridge)),
            "walls_common": sorted(iter_bits(self.walls_common)),
            "walls_separating": sorted(iter_bits(self.walls_separating)),
        }


def shores_and_bridge(C1: ConvexSet, C2: ConvexSet, verify: bool = True) -> Bridge:
    """Shores ``S1 = pi_1(C2)``, ``S2 = pi_2(C1)`` and the bridge between them.

    The bridge is the union of the intervals ``I(s, pi_2(s))`` over ``s`` in
    ``S1``.  The witness sends a bridge vertex to its gates on ``S1`` and on
    ``I(x1, x2)``; with ``verify`` it is checked to be a bijection that adds
    distances exactly.
    """
    R = C1.realization
    P = R.pocset
    S1 = convex_set(R, {gate(y, C1) for y in C2.vertices()})
    S2 = convex_set(R, {gate(y, C2) for y in C1.vertices()})
    x1, x2 = pair_of_gates(C1, C2)
    members: set[int] = set()
    for s in S1.vertices():
        t = gate(s, C2)
        for v in R.vertices:
            if in_interval(s, t, v):
                members.add(R.index_of(v))
    B = ConvexSet(R, frozenset(members))
    I = convex_hull(R, [x1, x2])
    witness = {}
    for v in B.vertices():
        witness[v.bits] = (R.index_of(gate(v, S1)), R.index_of(gate(v, I)))
    common = C1.crossing_walls & C2.crossing_walls
    sep = separating_walls(C1, C2)
    out = Bridge(S1, S2, B, (x1, x2), witness, B.crossing_walls, common, sep)
    if verify:
        verify_bridge(out)
    return out


def verify_bridge(br: Bridge) -> None:
    """Raise unless the wall identity holds and the witness is an additive bijection."""
    R = br.bridge.realization
    P = R.pocset
    V = R.vertices
    if not br.wall_identity_holds():
        raise ConvexityError("bridge walls differ from common walls plus separating walls")
    pairs = list(br.witness.values())
    if len(set(pairs)) != len(pairs):
        raise ConvexityError("product witness is not injective")
    n_interval = len(convex_hull(R, list(br.gates)))
    if len(pairs) != len(br.shore1) * n_interval:
        raise ConvexityError("product witness is not surjective")
    items = list(br.witness.items())
    for (b1, (s1, i1)), (b2, (s2, i2)) in itertools.combinations(items, 2):
        d = distance(P, Ultrafilter(b1, P.walls), Ultrafilter(b2, P.walls))
        if d != distance(P, V[s1], V[s2]) + distance(P, V[i1], V[i2]):
            raise ConvexityError("product witness is not an isometry")
    # shores are matched isometrically by the gate maps
    C2 = br.shore2
    for a, b in itertools.combinations(br.shore1.vertices(), 2):
        if distance(P, a, b) != distance(P, gate(a, C2), gate(b, C2)):
            raise ConvexityError("shore bijection is not an isometry")


# ----------------------------------------------------------------------
# strong separation and facing tuples


def transversals(P: WeightedPocset, h: int) -> int:
    """Wall mask of walls transverse to the wall of ``h``."""
    row = P.nested_mask[h]
    out = 0
    w0 = h >> 1
    for w in range(P.walls):
        if w != w0 and not (row >> (2 * w)) & 1:
            out |= 1 << w
    return out


def is_strongly_separated(P: WeightedPocset, h: int, k: int) -> bool:
    """Disjoint halfspaces with no wall transverse to both."""
    if not P.leq(h, k ^ 1):
        return False
    return not transversals(P, h) & transversals(P, k)


def is_strongly_separated_sets(C1: ConvexSet, C2: ConvexSet) -> bool:
    """Disjoint convex sets crossed by no common wall."""
    if C1.members & C2.members:
        return False
    return not C1.crossing_walls & C2.crossing_walls


def halfspace_distance(P: WeightedPocset, a: int, b: int) -> Fraction:
    """Distance between disjoint halfspaces: weight of walls with ``a`` and ``b`` on opposite sides."""
    if not P.leq(a, b ^ 1):
        return Fraction(0)
    between = P.up[a] & P.down[b ^ 1]
    return P.measure(between)


def find_facing_tuple(P: WeightedPocset, n: int, base: Ultrafilter | None = None) -> list[int] | None:
    """First ``n`` pairwise disjoint halfspaces on distinct walls, or None.

    Halfspaces not containing ``base`` are tried first (ascending ids); a
    tuple may use at most one halfspace containing ``base``, so that case is
    searched second.
    """
    if n < 2:
        raise ConvexityError("facing tuples need n >= 2")
    disjoint = [P.down[h ^ 1] for h in range(P.size)]
    if base is None:
        order = [list(range(P.size))]
    else:
        away = [h for h in range(P.size) if not base.contains(h)]
        near = [h for h in range(P.size) if base.contains(h)]
        order = [away, None]  # None marks the mixed pass

    def search(cands: list[int], need: int, allowed: int, walls: int, acc: list[int]):
        if need == 0:
            return list(acc)
        for idx, h in enumerate(cands):
            if not (allowed >> h) & 1 or (walls >> (h >> 1)) & 1:
                continue
            acc.append(h)
            r = search(cands[idx + 1:], need - 1, allowed & disjoint[h], walls | (1 << (h >> 1)), acc)
            if r is not None:
                return r
            acc.pop()
        return None

    full = (1 << P.size) - 1
    if base is None:
        return search(order[0], n, full, 0, [])
    r = search(order[0], n, full, 0, [])
    if r is not None:
        return r
    for h in near:
        rest = [k for k in order[0] if (disjoint[h] >> k) & 1]
        r = search(rest, n - 1, disjoint[h], 1 << (h >> 1), [])
        if r is not None:
            return sorted([h] + r)
    return None


def is_facing(P: WeightedPocset, hs: Sequence[int]) -> bool:
    if len({h >> 1 for h in hs}) != len(hs):
        return False
    return all(P.leq(a, b ^ 1) for a, b in itertools.combinations(hs, 2))


# ----------------------------------------------------------------------
# skewering


@dataclass(frozen=True)
class SkewerResult:
    word: tuple | None
    image: int | None
    gap: Fraction | None
    explored: int


def skewering_search(level, gens: Sequence, h: int, k: int, max_length: int = 4) -> SkewerResult:
    """Shortest generator word ``g`` with ``g k`` strictly inside ``h`` and ``h`` inside ``k``.

    Breadth-first over words in the generators and their inverses, pruning
    words whose image of ``k`` was already seen.  Raises
    :class:`~mediankit.spaces.OutOfDomain` with the depth that would be
    needed when no word succeeded but some image fell outside the level.
    """
    from .spaces import OutOfDomain

    P = level.pocset
    if not P.leq(h, k):
        raise ConvexityError("skewering needs h contained in k")
    letters = []
    for g in gens:
        if g.name == "id":
            continue
        letters.append((g.name, g))
        letters.append((g.inverse().name, g.inverse()))
    seen = {k}
    queue = deque([((), k)])
    explored = 0
    overflow = 0
    while queue:
        word, img = queue.popleft()
        if len(word) >= max_length:
            continue
        for name, g in letters:
            nxt = g.map_halfspace(level, img)
            explored += 1
            if nxt is None:
                overflow = max(overflow, len(word) + 1)
                continue
            if nxt in seen:
                continue
            seen.add(nxt)
            w2 = (name,) + word
            if nxt != h and P.leq(nxt, h):
                gap = halfspace_distance(P, nxt, h ^ 1)
                if gap > 0:
                    return SkewerResult(w2, nxt, gap, explored)
            queue.append((w2, nxt))
    if overflow:
        shrink = max((g.shrinkage for _, g in letters), default=0)
        raise OutOfDomain(f"no skewering word found; images left depth {level.depth}, "
                          f"need depth >= {level.depth + shrink * overflow}")
    return SkewerResult(None, None, None, explored)


# ----------------------------------------------------------------------
# centre of strongly separated triples


SAMPLE_LIMIT = 10 ** 4


def strong_separation_center(R: MedianRealization, hs: Sequence[int], ks: Sequence[int],
                             seed: int = 0, limit: int = SAMPLE_LIMIT) -> Ultrafilter:
    """The common median of every triple drawn from ``k_1 x k_2 x k_3``.

    Exhaustive when the product has at most ``limit`` triples, otherwise a
    seeded sample of ``limit`` triples.
    """
    P = R.pocset
    if len(hs) != 3 or len(ks) != 3:
        raise ConvexityError("need three halfspaces of each kind")
    if not is_facing(P, hs):
        raise ConvexityError("h-triple is not facing")
    for h, k in zip(hs, ks):
        if not is_strongly_separated(P, k, h ^ 1):
            raise ConvexityError(f"halfspaces {k} and {h ^ 1} are not strongly separated")
    sets = [[v for v in R.vertices if v.contains(k)] for k in ks]
    total = len(sets[0]) * len(sets[1]) * len(sets[2])
    if total <= limit:
        triples: Iterable = itertools.product(*sets)
    else:
        rng = random.Random(seed)
        triples = ((rng.choice(sets[0]), rng.choice(sets[1]), rng.choice(sets[2]))
                   for _ in range(limit))
    z = None
    for a, b, c in triples:
        m = median(a, b, c)
        if z is None:
            z = m
        elif m != z:
            raise ConvexityError("median is not constant over the sampled triples")
    assert z is not None
    return z
