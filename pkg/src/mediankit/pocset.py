"""Weighted pocsets, ultrafilters and the median algebra they realize.

Halfspaces are the integers ``0 .. 2W-1``; ``2k`` and ``2k+1`` are the two
sides of wall ``k``, so the complement of ``h`` is ``h ^ 1``.  Sets of
halfspaces are handled internally as int bitmasks over these ids.

An ultrafilter picks one side of every wall.  It is stored as an int with
one bit per wall: bit ``k`` set means side ``2k+1`` was picked.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

DEFAULT_VERTEX_CAP = 10**6
RANK_WARN_WALLS = 64

_SPREAD = str.maketrans({"0": "01", "1": "10"})


class PocsetError(ValueError):
    """Raised when an input violates a precondition of the pocset kernel."""


class BudgetExceeded(RuntimeError):
    """Raised when a configurable size cap is hit."""

    def __init__(self, budget: str, limit: int):
        super().__init__(f"budget exceeded: {budget} (limit {limit})")
        self.budget = budget
        self.limit = limit


def comp(h: int) -> int:
    return h ^ 1


def wall_of(h: int) -> int:
    return h >> 1


def iter_bits(mask: int) -> Iterator[int]:
    """Yield the positions of set bits, lowest first."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(ids: Iterable[int]) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def ids_of(mask: int) -> list[int]:
    return list(iter_bits(mask))


def _even_mask(walls: int) -> int:
    return int("01" * walls, 2) if walls else 0


def swap_sides(mask: int, walls: int) -> int:
    """Replace every halfspace in ``mask`` by its complement."""
    even = _even_mask(walls)
    return ((mask & even) << 1) | ((mask >> 1) & even)


def _as_fraction(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, str):
        return Fraction(w)
    return Fraction(w)


@dataclass(frozen=True, eq=False)
class WeightedPocset:
    """Finite pocset with a positive rational weight on every wall.

    Parameters
    ----------
    walls : int
        Number of walls ``W``; halfspace ids run over ``0 .. 2W-1``.
    up : tuple of int
        ``up[h]`` is the bitmask of all ``k`` with ``h <= k``.
    weights : tuple of Fraction
        One weight per wall.

    Construction does not police the axioms, so that broken inputs can
    still be handed to :func:`validate`.  Everything else assumes a valid
    pocset.
    """

    walls: int
    up: tuple
    weights: tuple

    def __eq__(self, other):
        if not isinstance(other, WeightedPocset):
            return NotImplemented
        return (self.walls, self.up, self.weights) == (other.walls, other.up, other.weights)

    __hash__ = None  # type: ignore[assignment]

    # -- constructors -------------------------------------------------
    @classmethod
    def from_pairs(cls, walls: int, pairs: Iterable[Sequence[int]], weights=None,
                   close: bool = True) -> "WeightedPocset":
        """Build from ``(h, k)`` pairs meaning ``h <= k``.

        With ``close`` the relation is made reflexive, closed under
        ``h <= k  =>  k* <= h*`` and transitively closed.
        """
        n = 2 * walls
        up = [0] * n
        for h, k in pairs:
            h, k = int(h), int(k)
            if not (0 <= h < n and 0 <= k < n):
                raise PocsetError(f"halfspace id out of range in pair ({h}, {k})")
            up[h] |= 1 << k
            if close:
                up[k ^ 1] |= 1 << (h ^ 1)
        if close:
            for h in range(n):
                up[h] |= 1 << h
            # Warshall on bit rows
            for k in range(n):
                bit = 1 << k
                row = up[k]
                for i in range(n):
                    if up[i] & bit:
                        up[i] |= row
        if weights is None:
            weights = [1] * walls
        ws = tuple(_as_fraction(w) for w in weights)
        return cls(walls, tuple(up), ws)

    @classmethod
    def from_halfspace_sets(cls, masks: Sequence[int], weights) -> "WeightedPocset":
        """Build the inclusion order of halfspaces given as vertex bitmasks.

        ``masks[2k]`` and ``masks[2k+1]`` must be complementary subsets of a
        common vertex set; ``h <= k`` iff ``masks[h]`` is a subset of
        ``masks[k]``.
        """
        n = len(masks)
        if n % 2:
            raise PocsetError("need an even number of halfspaces")
        nverts = max((m.bit_length() for m in masks), default=0)
        full_h = (1 << n) - 1
        # halfspaces containing each vertex
        containing = [0] * nverts
        for h, m in enumerate(masks):
            for v in iter_bits(m):
                containing[v] |= 1 << h
        up = []
        for h, m in enumerate(masks):
            row = full_h
            for v in iter_bits(m):
                row &= containing[v]
                if row == 1 << h:
                    break
            up.append(row)
        return cls(n // 2, tuple(up), tuple(_as_fraction(w) for w in weights))

    # -- basic queries ------------------------------------------------
    @property
    def size(self) -> int:
        return 2 * self.walls

    def leq(self, h: int, k: int) -> bool:
        return bool((self.up[h] >> k) & 1)

    def weight(self, h: int) -> Fraction:
        return self.weights[h >> 1]

    @cached_property
    def down(self) -> tuple:
        """``down[h]``: bitmask of all ``k`` with ``k <= h``."""
        return tuple(swap_sides(self.up[h ^ 1], self.walls) for h in range(self.size))

    @cached_property
    def strict_down(self) -> tuple:
        return tuple(d & ~(1 << h) for h, d in enumerate(self.down))

    @cached_property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    @cached_property
    def uniform_weight(self) -> Fraction | None:
        if self.walls and all(w == self.weights[0] for w in self.weights):
            return self.weights[0]
        return None

    def comparable(self, h: int, k: int) -> bool:
        return self.leq(h, k) or self.leq(k, h)

    def transverse(self, h: int, k: int) -> bool:
        """No two distinct elements of ``{h, h*, k, k*}`` are comparable."""
        if h >> 1 == k >> 1:
            return False
        return not (self.leq(h, k) or self.leq(k, h) or self.leq(h, k ^ 1) or self.leq(h ^ 1, k))

    def disjoint(self, h: int, k: int) -> bool:
        return self.leq(h, k ^ 1)

    @cached_property
    def nested_mask(self) -> tuple:
        """Per halfspace: all halfspaces comparable to it or to its complement."""
        out = []
        for h in range(self.size):
            m = self.up[h] | self.down[h] | self.up[h ^ 1] | self.down[h ^ 1]
            out.append(m | swap_sides(m, self.walls))
        return tuple(out)

    def measure(self, mask: int) -> Fraction:
        """Total weight of a halfspace set given as a bitmask."""
        if not mask:
            return Fraction(0)
        u = self.uniform_weight
        if u is not None:
            return u * bin(mask).count("1")
        ws = self.weights
        return sum((ws[h >> 1] for h in iter_bits(mask)), Fraction(0))

    def pairs(self, strict: bool = True) -> list[tuple[int, int]]:
        """All ``(h, k)`` with ``h <= k`` in lexicographic order."""
        out = []
        for h in range(self.size):
            for k in iter_bits(self.up[h]):
                if strict and k == h:
                    continue
                out.append((h, k))
        return out

    # -- serialization -------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "walls": self.walls,
            "leq": [list(p) for p in self.pairs()],
            "weights": [f"{w.numerator}/{w.denominator}" for w in self.weights],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "WeightedPocset":
        try:
            walls = int(data["walls"])
            pairs = [tuple(p) for p in data.get("leq", [])]
            weights = data.get("weights")
        except (KeyError, TypeError, ValueError) as exc:
            raise PocsetError(f"malformed pocset JSON: {exc}") from exc
        if weights is not None and len(weights) != walls:
            raise PocsetError(f"expected {walls} weights, got {len(weights)}")
        return cls.from_pairs(walls, pairs, weights)

    # -- ultrafilter helpers ------------------------------------------
    def sides(self, bits: int) -> int:
        """Halfspace bitmask of the sides picked by wall-bits ``bits``."""
        if self.walls == 0:
            return 0
        return int(format(bits, f"0{self.walls}b").translate(_SPREAD), 2)

    def bits_of_sides(self, sides: int) -> int:
        """Inverse of :meth:`sides`; assumes one side per wall."""
        odd = sides >> 1
        even = _even_mask(self.walls)
        odd &= even
        # compress every other bit
        s = format(odd, f"0{2 * self.walls}b")[1::2] if self.walls else "0"
        return int(s, 2)

    def is_ultrafilter_sides(self, sides: int) -> bool:
        for h in iter_bits(sides):
            if self.up[h] & ~sides:
                return False
        return True


@dataclass(frozen=True, order=True)
class Ultrafilter:
    """One side per wall, as wall bits (see module docstring)."""

    bits: int
    walls: int = field(compare=False)

    def side(self, wall: int) -> int:
        return 2 * wall + ((self.bits >> wall) & 1)

    def contains(self, h: int) -> bool:
        return ((self.bits >> (h >> 1)) & 1) == (h & 1)

    def halfspaces(self) -> list[int]:
        return [self.side(k) for k in range(self.walls)]

    def flip(self, wall: int) -> "Ultrafilter":
        return Ultrafilter(self.bits ^ (1 << wall), self.walls)


def ultrafilter_from_sides(pocset: WeightedPocset, halfspaces: Iterable[int]) -> Ultrafilter:
    """Assemble an ultrafilter from a list of chosen halfspaces.

    Raises PocsetError unless exactly one side per wall is given and the
    result is upward closed.
    """
    seen = {}
    for h in halfspaces:
        w = h >> 1
        if w in seen and seen[w] != h:
            raise PocsetError(f"both sides of wall {w} chosen")
        seen[w] = h
    if len(seen) != pocset.walls:
        missing = sorted(set(range(pocset.walls)) - set(seen))
        raise PocsetError(f"no side chosen for walls {missing[:8]}")
    bits = 0
    for w, h in seen.items():
        if h & 1:
            bits |= 1 << w
    u = Ultrafilter(bits, pocset.walls)
    if not is_ultrafilter(pocset, u):
        raise PocsetError("side selection is not upward closed")
    return u


def is_ultrafilter(pocset: WeightedPocset, u: Ultrafilter) -> bool:
    return u.walls == pocset.walls and pocset.is_ultrafilter_sides(pocset.sides(u.bits))


def validate(pocset: WeightedPocset) -> list[str]:
    """Return a list of violated pocset axioms; empty means valid."""
    report = []
    n = pocset.size
    if len(pocset.up) != n:
        return [f"order table has {len(pocset.up)} rows, expected {n}"]
    if len(pocset.weights) != pocset.walls:
        report.append(f"expected {pocset.walls} weights, got {len(pocset.weights)}")
    for k, w in enumerate(pocset.weights):
        if not w > 0:
            report.append(f"non-positive weight on wall {k}: {w}")
    full = pocset.full_mask
    up = pocset.up
    for h in range(n):
        row = up[h]
        if row & ~full:
            report.append(f"halfspace {h} related to out-of-range ids")
            row &= full
        if not (row >> h) & 1:
            report.append(f"not reflexive at {h}")
        if (row >> (h ^ 1)) & 1:
            report.append(f"degenerate wall {h >> 1}: {h} <= {h ^ 1}")
        for k in iter_bits(row):
            if k != h and (up[k] >> h) & 1:
                if h < k:
                    report.append(f"not antisymmetric: {h} <= {k} <= {h}")
            if up[k] & ~row & full:
                bad = next(iter_bits(up[k] & ~row & full))
                report.append(f"not transitive: {h} <= {k} <= {bad}")
            if not (up[k ^ 1] >> (h ^ 1)) & 1:
                report.append(f"complement not order-reversing: {h} <= {k} but not {k ^ 1} <= {h ^ 1}")
    return report


def require_valid(pocset: WeightedPocset) -> None:
    problems = validate(pocset)
    if problems:
        raise PocsetError("invalid pocset: " + "; ".join(problems[:5]))


def median(a: Ultrafilter, b: Ultrafilter, c: Ultrafilter) -> Ultrafilter:
    """Majority vote on every wall."""
    x, y, z = a.bits, b.bits, c.bits
    return Ultrafilter((x & y) | (y & z) | (z & x), a.walls)


def distance(pocset: WeightedPocset, a: Ultrafilter, b: Ultrafilter) -> Fraction:
    diff = a.bits ^ b.bits
    if not diff:
        return Fraction(0)
    u = pocset.uniform_weight
    if u is not None:
        return u * bin(diff).count("1")
    ws = pocset.weights
    return sum((ws[k] for k in iter_bits(diff)), Fraction(0))


def separating(pocset: WeightedPocset, a: Ultrafilter, b: Ultrafilter) -> int:
    """Bitmask of halfspaces containing ``b`` but not ``a``."""
    return pocset.sides(b.bits) & ~pocset.sides(a.bits)


def halfspace_interval(pocset: WeightedPocset, A: Iterable[Ultrafilter],
                       B: Iterable[Ultrafilter]) -> frozenset[int]:
    """Halfspaces that contain every vertex of ``B`` and no vertex of ``A``."""
    mask = pocset.full_mask
    for b in B:
        mask &= pocset.sides(b.bits)
    for a in A:
        mask &= ~pocset.sides(a.bits)
    return frozenset(iter_bits(mask))


def find_ultrafilter(pocset: WeightedPocset) -> Ultrafilter:
    """Some ultrafilter of a valid pocset, by propagation and backtracking."""
    require_valid(pocset)
    up = pocset.up
    W = pocset.walls

    def extend(chosen: int, w: int):
        while w < W and (chosen >> (2 * w)) & 3:
            w += 1
        if w == W:
            return chosen
        for h in (2 * w, 2 * w + 1):
            forced = up[h]
            if swap_sides(forced, W) & chosen:
                continue
            r = extend(chosen | forced, w + 1)
            if r is not None:
                return r
        return None

    sides = extend(0, 0)
    if sides is None:  # pragma: no cover - impossible for valid pocsets
        raise PocsetError("no ultrafilter found")
    return Ultrafilter(pocset.bits_of_sides(sides), W)


@dataclass(frozen=True, eq=False)
class MedianRealization:
    """All ultrafilters reachable from a seed, with the flip-edges between them."""

    pocset: WeightedPocset
    vertices: tuple
    edges: tuple
    index: dict

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, u: Ultrafilter) -> bool:
        return u.bits in self.index

    def index_of(self, u: Ultrafilter) -> int:
        return self.index[u.bits]

    @cached_property
    def neighbours(self) -> tuple:
        nb = [[] for _ in self.vertices]
        for i, j in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return tuple(tuple(sorted(x)) for x in nb)


def flippable_walls(pocset: WeightedPocset, u: Ultrafilter) -> list[int]:
    """Walls whose chosen side is minimal among the chosen sides."""
    sides = pocset.sides(u.bits)
    sd = pocset.strict_down
    out = []
    for w in range(pocset.walls):
        h = 2 * w + ((u.bits >> w) & 1)
        if not sides & sd[h]:
            out.append(w)
    return out


def realize(pocset: WeightedPocset, seed: Ultrafilter | None = None,
            cap: int = DEFAULT_VERTEX_CAP, check: bool = True) -> MedianRealization:
    """Breadth-first generation of ultrafilters by flipping minimal sides.

    For a finite pocset this reaches every ultrafilter.
    """
    if check:
        require_valid(pocset)
    if seed is None:
        seed = find_ultrafilter(pocset)
    if not is_ultrafilter(pocset, seed):
        raise PocsetError("seed is not an ultrafilter")
    index = {seed.bits: 0}
    verts = [seed]
    edges = []
    queue = deque([seed])
    while queue:
        u = queue.popleft()
        i = index[u.bits]
        for w in flippable_walls(pocset, u):
            b = u.bits ^ (1 << w)
            j = index.get(b)
            if j is None:
                if len(verts) >= cap:
                    raise BudgetExceeded("vertices", cap)
                j = len(verts)
                index[b] = j
                v = Ultrafilter(b, pocset.walls)
                verts.append(v)
                queue.append(v)
            if i < j:
                edges.append((i, j))
    return MedianRealization(pocset, tuple(verts), tuple(sorted(edges)), index)


def interval(realization: MedianRealization, a: Ultrafilter, b: Ultrafilter) -> list[Ultrafilter]:
    """Vertices ``v`` with ``median(a, b, v) == v``, in realization order."""
    agree = ~(a.bits ^ b.bits)
    return [v for v in realization.vertices if not ((v.bits ^ a.bits) & agree)]


def in_interval(a: Ultrafilter, b: Ultrafilter, v: Ultrafilter) -> bool:
    return not ((v.bits ^ a.bits) & ~(a.bits ^ b.bits))


def transversality_graph(pocset: WeightedPocset) -> nx.Graph:
    G = nx.Graph()
    G.add_nodes_from(range(pocset.walls))
    nested = pocset.nested_mask
    for w in range(pocset.walls):
        row = nested[2 * w]
        for v in range(w + 1, pocset.walls):
            if not (row >> (2 * v)) & 1:
                G.add_edge(w, v)
    return G


def rank(pocset: WeightedPocset, warn_above: int | None = RANK_WARN_WALLS) -> int:
    """Largest number of pairwise transverse walls (exact, exponential)."""
    if pocset.walls == 0:
        return 0
    if warn_above is not None and pocset.walls > warn_above:
        warnings.warn(f"exact rank on {pocset.walls} walls may take exponential time",
                      RuntimeWarning, stacklevel=2)
    G = transversality_graph(pocset)
    return max(len(c) for c in nx.find_cliques(G))


def minimal_chain_cover(pocset: WeightedPocset, elements: Sequence[int]) -> list[list[int]]:
    """Partition ``elements`` into the fewest chains (Dilworth via matching).

    Each chain is listed from its largest halfspace down to its smallest.
    Chains are sorted by their first element.
    """
    elems = sorted(set(elements))
    n = len(elems)
    if n == 0:
        return []
    pos = {h: i for i, h in enumerate(elems)}
    emask = mask_of(elems)
    rows, cols = [], []
    for i, h in enumerate(elems):
        # edge i -> j when elems[j] is strictly below elems[i]
        for k in iter_bits(pocset.strict_down[h] & emask):
            rows.append(i)
            cols.append(pos[k])
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    match = maximum_bipartite_matching(graph, perm_type="column")
    succ = {}
    has_pred = set()
    for i in range(n):
        j = int(match[i])
        if j >= 0:
            succ[i] = j
            has_pred.add(j)
    chains = []
    for i in range(n):
        if i in has_pred:
            continue
        chain = [elems[i]]
        while i in succ:
            i = succ[i]
            chain.append(elems[i])
        chains.append(chain)
    # a matching on the strict order yields chains of the order, but the
    # listed order must follow inclusion
    for c in chains:
        c.sort(key=lambda h: bin(pocset.up[h] & emask).count("1"))
    chains.sort(key=lambda c: min(c))
    return chains


def chain_decomposition(pocset: WeightedPocset, a: Ultrafilter, b: Ultrafilter) -> list[list[int]]:
    """Fewest chains partitioning the halfspaces that contain ``a`` but not ``b``."""
    return minimal_chain_cover(pocset, ids_of(separating(pocset, b, a)))


def up_closure(pocset: WeightedPocset, mask: int) -> int:
    m = 0
    for h in iter_bits(mask):
        m |= pocset.up[h]
    return m


def down_closure(pocset: WeightedPocset, mask: int) -> int:
    m = 0
    for h in iter_bits(mask):
        m |= pocset.down[h]
    return m


def inseparable_closure_mask(pocset: WeightedPocset, mask: int) -> int:
    return up_closure(pocset, mask) & down_closure(pocset, mask)


def inseparable_closure(pocset: WeightedPocset, A: Iterable[int]) -> frozenset[int]:
    """All ``j`` with ``h <= j <= k`` for some ``h, k`` in ``A``."""
    mask = mask_of(A)
    if not mask:
        raise PocsetError("inseparable closure of an empty set")
    return frozenset(iter_bits(inseparable_closure_mask(pocset, mask)))


def is_inseparable_mask(pocset: WeightedPocset, mask: int) -> bool:
    return inseparable_closure_mask(pocset, mask) == mask
