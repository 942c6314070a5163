"""Example median spaces as depth-indexed families of finite pocsets.

Each generator produces a :class:`Level` at every depth ``n``.  A level
knows its walls by stable keys, so the injection from depth ``n-1`` into
depth ``n`` is just key lookup.  Halfspaces are referred to abstractly by
``(wall_key, side)``; automorphisms act on these keys and on vertex labels,
and a level decides which images actually exist at that truncation.

Grid-like generators (line, grid, strip) live inside ``Z^k``: wall
``(a, c)`` separates coordinate ``a <= c`` (side 0) from ``>= c+1`` (side 1).
They also expose a closed-form inclusion test that does not materialize the
level, used for very deep truncations.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Hashable, Iterable, Sequence

from .pocset import (
    MedianRealization,
    PocsetError,
    Ultrafilter,
    WeightedPocset,
    iter_bits,
    rank as pocset_rank,
    realize,
)


class SpaceError(ValueError):
    """Bad generator parameters or spec string.

    ``column`` is the 1-based position in the spec string, when known.
    """

    def __init__(self, msg: str, column: int | None = None):
        super().__init__(msg if column is None else f"{msg} (column {column})")
        self.column = column


class OutOfDomain(LookupError):
    """An automorphism image does not exist at the requested depth."""


# ----------------------------------------------------------------------
# levels


@dataclass(eq=False)
class Level:
    """One finite truncation of a growing complex."""

    name: str
    depth: int
    pocset: WeightedPocset
    wall_keys: tuple
    births: tuple
    labels: tuple
    bits: dict
    basepoint: Hashable

    @cached_property
    def wall_index(self) -> dict:
        return {k: i for i, k in enumerate(self.wall_keys)}

    @cached_property
    def label_of_bits(self) -> dict:
        return {b: l for l, b in self.bits.items()}

    @property
    def walls(self) -> int:
        return self.pocset.walls

    def has_wall(self, key) -> bool:
        return key in self.wall_index

    def hid(self, hkey) -> int:
        """Halfspace id of the abstract halfspace ``(wall_key, side)``."""
        return 2 * self.wall_index[hkey[0]] + hkey[1]

    def find_hid(self, hkey) -> int | None:
        w = self.wall_index.get(hkey[0])
        return None if w is None else 2 * w + hkey[1]

    def hkey(self, h: int):
        return (self.wall_keys[h >> 1], h & 1)

    def birth(self, h: int) -> int:
        return self.births[h >> 1]

    def vertex(self, label) -> Ultrafilter:
        try:
            return Ultrafilter(self.bits[label], self.walls)
        except KeyError:
            raise OutOfDomain(f"vertex {label!r} not present at depth {self.depth}") from None

    def label(self, u: Ultrafilter):
        return self.label_of_bits.get(u.bits, u.bits)

    @property
    def base(self) -> Ultrafilter:
        return self.vertex(self.basepoint)

    @cached_property
    def realization(self) -> MedianRealization:
        return realize(self.pocset, self.base)

    def vertices(self) -> list[Ultrafilter]:
        return [Ultrafilter(self.bits[l], self.walls) for l in self.labels]


def level_from_geometry(name: str, depth: int, labels: Sequence, walls: Sequence,
                        side: Callable, basepoint) -> Level:
    """Build a level from explicit vertices and a side function.

    ``walls`` lists ``(key, weight, birth)``; ``side(label, key)`` is 0 or 1.
    """
    labels = tuple(labels)
    masks = []
    bits = {l: 0 for l in labels}
    for w, (key, _, _) in enumerate(walls):
        m1 = 0
        for v, l in enumerate(labels):
            if side(l, key):
                m1 |= 1 << v
                bits[l] |= 1 << w
        full = (1 << len(labels)) - 1
        masks.append(full ^ m1)
        masks.append(m1)
    for w, (key, _, _) in enumerate(walls):
        if masks[2 * w] == 0 or masks[2 * w + 1] == 0:
            raise SpaceError(f"wall {key!r} has an empty side at depth {depth}")
    pocset = WeightedPocset.from_halfspace_sets(masks, [wt for _, wt, _ in walls])
    return Level(name, depth, pocset, tuple(k for k, _, _ in walls),
                 tuple(b for _, _, b in walls), labels, bits, basepoint)


# ----------------------------------------------------------------------
# automorphisms and boundary points


def _identity(x):
    return x


@dataclass(frozen=True)
class Automorphism:
    """Isometry acting on abstract halfspaces (and optionally on labels).

    ``fwd``/``bwd`` map ``(wall_key, side)`` to ``(wall_key, side)``;
    ``vfwd``/``vbwd`` map vertex labels.  ``shrinkage`` is the number of
    depth levels lost by one application.
    """

    name: str
    fwd: Callable = _identity
    bwd: Callable = _identity
    vfwd: Callable | None = _identity
    vbwd: Callable | None = _identity
    shrinkage: int = 0
    orientation: int | None = 1  # +1 keeps every side label, -1 swaps all, None mixed

    def inverse(self) -> "Automorphism":
        return Automorphism(_inv_name(self.name), self.bwd, self.fwd, self.vbwd, self.vfwd,
                            self.shrinkage, self.orientation)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """``self`` after ``other``."""
        f1, f2, b1, b2 = self.fwd, other.fwd, self.bwd, other.bwd
        if self.vfwd is not None and other.vfwd is not None:
            v1, v2, w1, w2 = self.vfwd, other.vfwd, self.vbwd, other.vbwd
            vf = lambda l: v1(v2(l))
            vb = lambda l: w2(w1(l))
        else:
            vf = vb = None
        return Automorphism(_compose_name(self.name, other.name), lambda k: f1(f2(k)),
                            lambda k: b2(b1(k)), vf, vb, self.shrinkage + other.shrinkage,
                            _mul(self.orientation, other.orientation))

    def power(self, k: int) -> "Automorphism":
        if k == 0:
            return IDENTITY
        g = self if k > 0 else self.inverse()
        out = g
        for _ in range(abs(k) - 1):
            out = g.compose(out)
        return out

    # -- action at a level ------------------------------------------
    def map_halfspace(self, level: Level, h: int) -> int | None:
        return level.find_hid(self.fwd(level.hkey(h)))

    def apply_to_halfspace(self, level: Level, h: int) -> int:
        g = self.map_halfspace(level, h)
        if g is None:
            raise OutOfDomain(f"{self.name} maps halfspace {level.hkey(h)!r} outside depth {level.depth}")
        return g

    def preimage_halfspace(self, level: Level, h: int) -> int | None:
        return level.find_hid(self.bwd(level.hkey(h)))

    def halfspace_map(self, level: Level) -> dict:
        out = {}
        for h in range(level.pocset.size):
            g = self.map_halfspace(level, h)
            if g is not None:
                out[h] = g
        return out

    def apply_to_vertex(self, level: Level, u: Ultrafilter) -> Ultrafilter:
        if self.vfwd is not None:
            lab = level.label(u)
            img = self.vfwd(lab)
            if img not in level.bits:
                raise OutOfDomain(f"{self.name} maps vertex {lab!r} outside depth {level.depth}")
            return level.vertex(img)
        # derived from the halfspace action; needs every preimage, since a
        # closure over partial images would silently clamp to the window
        bits = 0
        for w, key in enumerate(level.wall_keys):
            pre = level.find_hid(self.bwd((key, 1)))
            if pre is None:
                raise OutOfDomain(f"{self.name}: no preimage for wall {key!r} at depth {level.depth}")
            if u.contains(pre):
                bits |= 1 << w
        return Ultrafilter(bits, level.walls)

    def try_vertex(self, level: Level, u: Ultrafilter) -> Ultrafilter | None:
        try:
            return self.apply_to_vertex(level, u)
        except OutOfDomain:
            return None

    def inverts_walls(self, level: Level) -> bool:
        return any(self.map_halfspace(level, h) == h ^ 1 for h in range(level.pocset.size))


def _mul(a, b):
    return None if a is None or b is None else a * b


def _inv_name(name: str) -> str:
    return name[:-3] if name.endswith("^-1") else (name if name == "id" else f"{name}^-1")


def _compose_name(a: str, b: str) -> str:
    if a == "id":
        return b
    if b == "id":
        return a
    return f"{a}*{b}"


IDENTITY = Automorphism("id")


@dataclass(frozen=True)
class BoundaryPoint:
    """Coherent choice of a side for every wall key, beyond every depth."""

    name: str
    side: Callable

    def at(self, level: Level) -> Ultrafilter:
        bits = 0
        for w, key in enumerate(level.wall_keys):
            if self.side(key):
                bits |= 1 << w
        return Ultrafilter(bits, level.walls)

    def contains(self, level: Level, h: int) -> bool:
        return self.side(level.wall_keys[h >> 1]) == (h & 1)


# ----------------------------------------------------------------------
# growing complexes


class GrowingComplex:
    """Base class: caches levels and derives injections from wall keys."""

    kind = "abstract"
    declared_rank = 1
    rank_stable_from = 1
    scale = Fraction(1)

    def __init__(self, spec: str, default_depth: int):
        self.spec = spec
        self.default_depth = default_depth
        self._levels: dict[int, Level] = {}

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec}>"

    def level(self, n: int | None = None) -> Level:
        if n is None:
            n = self.default_depth
        if n < 0:
            raise SpaceError(f"depth must be non-negative, got {n}")
        lv = self._levels.get(n)
        if lv is None:
            lv = self._build(n)
            self._levels[n] = lv
        return lv

    def _build(self, n: int) -> Level:  # pragma: no cover - abstract
        raise NotImplementedError

    def vertex_estimate(self, n: int) -> int | None:
        """Vertex count at depth ``n`` without building the level (None if unknown)."""
        return None

    def injection(self, n: int) -> dict:
        """Halfspace ids at depth ``n-1`` mapped to ids at depth ``n``."""
        lo, hi = self.level(n - 1), self.level(n)
        out = {}
        for h in range(lo.pocset.size):
            out[h] = hi.hid(lo.hkey(h))
        return out

    def automorphisms(self) -> dict:
        return {"id": IDENTITY}

    def boundary_points(self) -> dict:
        return {}

    def automorphism(self, name: str) -> Automorphism:
        gens = self.automorphisms()
        parts = [p.strip() for p in name.split("*")] if name else ["id"]
        out = IDENTITY
        for p in reversed(parts):
            inv = p.endswith("^-1")
            base = p[:-3] if inv else p
            if base not in gens:
                raise SpaceError(f"unknown automorphism {base!r} for {self.spec}; "
                                 f"known: {', '.join(sorted(gens))}")
            g = gens[base].inverse() if inv else gens[base]
            out = g.compose(out)
        return out

    def boundary(self, name: str | None = None) -> BoundaryPoint:
        pts = self.boundary_points()
        if not pts:
            raise SpaceError(f"{self.spec} declares no boundary points")
        if name is None:
            return pts[sorted(pts)[0]]
        if name not in pts:
            raise SpaceError(f"unknown boundary point {name!r} for {self.spec}; "
                             f"known: {', '.join(sorted(pts))}")
        return pts[name]

    # closed-form order; only grid-like generators provide it
    has_closed_form = False


def _birth(c: int, offset: int = 0) -> int:
    return c + 1 + offset if c >= 0 else 0


def _frac(x) -> Fraction:
    try:
        return Fraction(x)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise SpaceError(f"bad weight {x!r}") from exc


class _Lattice(GrowingComplex):
    """Shared machinery for subcomplexes of ``Z^k`` cut by the box window."""

    has_closed_form = True
    band: tuple | None = None  # (axis_lo, axis_hi, lo, hi): lo <= x_hi - x_lo <= hi

    margin = 0

    def axes(self) -> int:
        raise NotImplementedError

    def axis_length(self, a: int, n: int) -> int:
        raise NotImplementedError

    def axis_offset(self, a: int) -> int:
        return 0

    def axis_weight(self, a: int) -> Fraction:
        raise NotImplementedError

    def wall_list(self, n: int) -> list:
        rows = []
        for a in range(self.axes()):
            for c in range(-self.margin, self.axis_length(a, n)):
                rows.append(((a, c), self.axis_weight(a), _birth(c, self.axis_offset(a))))
        rows.sort(key=lambda r: (r[2], r[0]))
        return rows

    def vertex_estimate(self, n: int) -> int:
        sizes = [self.axis_length(a, n) + self.margin + 1 for a in range(self.axes())]
        if self.band is None:
            return math.prod(sizes)
        a0, a1, blo, bhi = self.band
        lo1, hi1 = -self.margin, self.axis_length(a1, n)
        per = 0
        for x in range(-self.margin, self.axis_length(a0, n) + 1):
            per += max(0, min(hi1, x + bhi) - max(lo1, x + blo) + 1)
        rest = math.prod(sz for a, sz in enumerate(sizes) if a not in (a0, a1))
        return per * rest

    def labels_at(self, n: int) -> list:
        ranges = [range(-self.margin, self.axis_length(a, n) + 1) for a in range(self.axes())]
        out = []
        for p in itertools.product(*ranges):
            if self.band is not None:
                a0, a1, lo, hi = self.band
                if not lo <= p[a1] - p[a0] <= hi:
                    continue
            out.append(p if len(p) > 1 else p[0])
        return out

    @staticmethod
    def side_of(label, key) -> int:
        a, c = key
        x = label[a] if isinstance(label, tuple) else label
        return 1 if x >= c + 1 else 0

    def _build(self, n: int) -> Level:
        origin = tuple([0] * self.axes()) if self.axes() > 1 else 0
        return level_from_geometry(self.spec, n, self.labels_at(n), self.wall_list(n),
                                   self.side_of, origin)

    # -- closed form -------------------------------------------------
    def _region_nonempty(self, n: int, cons: list) -> bool:
        k = self.axes()
        lo = [-self.margin] * k
        hi = [self.axis_length(a, n) for a in range(k)]
        for (a, c), s in cons:
            if s:
                lo[a] = max(lo[a], c + 1)
            else:
                hi[a] = min(hi[a], c)
        if any(l > h for l, h in zip(lo, hi)):
            return False
        if self.band is None:
            return True
        a0, a1, blo, bhi = self.band
        return max(lo[a1] - hi[a0], blo) <= min(hi[a1] - lo[a0], bhi)

    def closed_form_leq(self, n: int, hk, kk) -> bool:
        """Inclusion of abstract halfspaces at depth ``n`` without building the level."""
        if hk == kk:
            return True
        return not self._region_nonempty(n, [hk, (kk[0], 1 - kk[1])])

    def closed_form_walls(self, n: int) -> list:
        return self.wall_list(n)

    @staticmethod
    def potential(hk) -> int:
        """Strictly increases as halfspaces shrink along inclusion (within one orientation)."""
        (a, c), s = hk
        p = 2 * c + (1 if a == 0 else 0)
        return p if s else -p

    def translation(self, name: str, vec: Sequence[int]) -> Automorphism:
        vec = tuple(vec)
        k = self.axes()

        def fwd(hk, v=vec):
            (a, c), s = hk
            return ((a, c + v[a]), s)

        def bwd(hk, v=vec):
            (a, c), s = hk
            return ((a, c - v[a]), s)

        if k == 1:
            vf = lambda l, v=vec[0]: l + v
            vb = lambda l, v=vec[0]: l - v
        else:
            vf = lambda l, v=vec: tuple(x + d for x, d in zip(l, v))
            vb = lambda l, v=vec: tuple(x - d for x, d in zip(l, v))
        return Automorphism(name, fwd, bwd, vf, vb, max(abs(x) for x in vec))


class Line(_Lattice):
    """Path on vertices ``-margin .. n`` at depth ``n``; wall ``c`` cuts between c and c+1."""

    kind = "line"
    declared_rank = 1

    def __init__(self, n: int = 8, weight=1, margin: int = 0, spec: str | None = None):
        if n < 1 or margin < 0:
            raise SpaceError(f"line needs n >= 1 and margin >= 0, got n={n}, margin={margin}")
        self.weight = _frac(weight)
        if self.weight <= 0:
            raise SpaceError("weights must be positive")
        self.margin = margin
        super().__init__(spec or f"line:n={n}", n)

    def axes(self):
        return 1

    def axis_length(self, a, n):
        return n

    def axis_weight(self, a):
        return self.weight

    def automorphisms(self):
        flip = Automorphism(
            "flip",
            lambda hk: ((0, -hk[0][1]), 1 - hk[1]),
            lambda hk: ((0, -hk[0][1]), 1 - hk[1]),
            lambda l: 1 - l, lambda l: 1 - l, 0, -1)
        return {"id": IDENTITY, "shift": self.translation("shift", (1,)), "flip": flip}

    def boundary_points(self):
        return {"end": BoundaryPoint("end", lambda key: 1)}


class Grid(_Lattice):
    """Box ``[-margin, L_a]`` in each axis; axis lengths grow with depth."""

    kind = "grid"

    def __init__(self, dims: Sequence[int] = (2, 2), weights=None, margin: int = 0,
                 spec: str | None = None):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 1 for d in dims) or margin < 0:
            raise SpaceError(f"grid needs positive dims, got {dims}")
        if weights is None:
            weights = [1] * len(dims)
        if len(weights) != len(dims):
            raise SpaceError("grid needs one weight per axis")
        self.dims = dims
        self.weights = tuple(_frac(w) for w in weights)
        if any(w <= 0 for w in self.weights):
            raise SpaceError("weights must be positive")
        self.margin = margin
        self.declared_rank = len(dims)
        super().__init__(spec or "grid:dims=" + "x".join(map(str, dims)), max(dims))

    def axes(self):
        return len(self.dims)

    def axis_offset(self, a):
        return self.default_depth - self.dims[a]

    def axis_length(self, a, n):
        return max(1, self.dims[a] + n - self.default_depth)

    def axis_weight(self, a):
        return self.weights[a]

    def automorphisms(self):
        k = self.axes()
        gens = {"id": IDENTITY, "shift": self.translation("shift", (1,) * k)}
        for a in range(k):
            gens[f"shift{a}"] = self.translation(f"shift{a}", tuple(int(i == a) for i in range(k)))
        return gens

    def boundary_points(self):
        return {"corner": BoundaryPoint("corner", lambda key: 1)}


class Strip(_Lattice):
    """Staircase ``{(i, j) : 0 <= j - i <= width}`` inside the box window."""

    kind = "strip"

    def __init__(self, n: int = 8, width: int = 2, margin: int = 0, spec: str | None = None):
        if n < 1 or width < 1 or margin < 0:
            raise SpaceError(f"strip needs n >= 1, width >= 1, got n={n}, width={width}")
        self.width = width
        self.margin = margin
        self.band = (0, 1, 0, width)
        self.declared_rank = 2 if width >= 2 else 1
        self.rank_stable_from = 2
        super().__init__(spec or f"strip:n={n},w={width}", n)

    def axes(self):
        return 2

    def axis_length(self, a, n):
        return n

    def axis_weight(self, a):
        return Fraction(1)

    def automorphisms(self):
        return {"id": IDENTITY, "shift": self.translation("shift", (1, 1))}

    def boundary_points(self):
        return {"diagonal": BoundaryPoint("diagonal", lambda key: 1)}


def strip_wall(kind: str, c: int):
    """Key of the vertical (``'V'``) or horizontal (``'H'``) strip wall ``c``."""
    return (0 if kind == "V" else 1, c)


class RegularTree(GrowingComplex):
    """Ball of radius ``n`` in the ``degree``-regular tree.

    Vertices are tuples of child indices; the root is ``()``.  The wall of
    the edge above ``t`` has key ``t``; side 1 is the subtree at ``t``.
    """

    kind = "tree"

    def __init__(self, degree: int = 3, depth: int = 3, weight=1, spec: str | None = None):
        if degree < 2 or depth < 1:
            raise SpaceError(f"tree needs degree >= 2 and depth >= 1, got {degree}, {depth}")
        self.degree = degree
        self.weight = _frac(weight)
        if self.weight <= 0:
            raise SpaceError("weights must be positive")
        super().__init__(spec or f"tree:{degree}:{depth}", depth)

    def labels_at(self, n: int) -> list:
        out = [()]
        frontier = [()]
        for _ in range(n):
            nxt = []
            for t in frontier:
                k = self.degree if not t else self.degree - 1
                nxt.extend(t + (j,) for j in range(k))
            out.extend(nxt)
            frontier = nxt
        return out

    def vertex_estimate(self, n: int) -> int:
        q = self.degree
        return 1 + q * sum((q - 1) ** i for i in range(n))

    @staticmethod
    def side_of(label, key) -> int:
        return 1 if label[: len(key)] == key else 0

    def _build(self, n: int) -> Level:
        labels = self.labels_at(n)
        walls = [(t, self.weight, len(t)) for t in labels if t]
        return level_from_geometry(self.spec, n, labels, walls, self.side_of, ())

    def level_permutation(self, name: str, position: int, perm: Sequence[int]) -> Automorphism:
        perm = tuple(perm)
        need = self.degree if position == 0 else self.degree - 1
        if sorted(perm) != list(range(need)):
            raise SpaceError(f"level {position} permutation must permute 0..{need - 1}")
        inv = tuple(perm.index(i) for i in range(need))

        def act(t, p):
            if len(t) <= position:
                return t
            return t[:position] + (p[t[position]],) + t[position + 1:]

        return Automorphism(name, lambda hk: (act(hk[0], perm), hk[1]),
                            lambda hk: (act(hk[0], inv), hk[1]),
                            lambda t: act(t, perm), lambda t: act(t, inv), 0)

    def automorphisms(self):
        q = self.degree
        gens = {"id": IDENTITY,
                "rot0": self.level_permutation("rot0", 0, [(i + 1) % q for i in range(q)])}
        if q >= 3:
            # fixes the branch through child 0
            gens["swap0"] = self.level_permutation("swap0", 0, [0, 2, 1] + list(range(3, q)))
        if q >= 3:
            gens["swap1"] = self.level_permutation("swap1", 1, [1, 0] + list(range(2, q - 1)))
        return gens

    def boundary_points(self):
        return {"ray": BoundaryPoint("ray", lambda key: 1 if all(x == 0 for x in key) else 0)}


class TreeOfSquares(GrowingComplex):
    """Every edge of a rank-one complex blown up to a square.

    The two ends of a tree edge sit at opposite corners.  Each tree wall
    ``w`` becomes the walls ``(w, 'a')`` and ``(w, 'b')`` of its square,
    both of the tree weight, so tree distances are doubled.
    """

    kind = "tos"
    declared_rank = 2
    scale = Fraction(2)

    def __init__(self, tree: GrowingComplex, spec: str | None = None):
        if tree.declared_rank != 1:
            raise SpaceError(f"tree_of_squares needs a rank-one input, got rank {tree.declared_rank}")
        self.tree = tree
        super().__init__(spec or f"tos:{tree.spec}", tree.default_depth)

    def vertex_estimate(self, n: int) -> int | None:
        v = self.tree.vertex_estimate(n)
        return None if v is None else 3 * v - 2

    def _edges(self, L: Level) -> dict:
        """Wall key -> (label on side 0, label on side 1) of the tree edge."""
        R = L.realization
        out = {}
        for i, j in R.edges:
            u, v = R.vertices[i], R.vertices[j]
            w = (u.bits ^ v.bits).bit_length() - 1
            if (v.bits >> w) & 1:
                out[L.wall_keys[w]] = (L.label(u), L.label(v))
            else:
                out[L.wall_keys[w]] = (L.label(v), L.label(u))
        return out

    def _build(self, n: int) -> Level:
        L = self.tree.level(n)
        if pocset_rank(L.pocset, warn_above=None) > 1:
            raise SpaceError("tree_of_squares needs a rank-one input")
        edges = self._edges(L)
        labels = [("v", l) for l in L.labels]
        for wk in L.wall_keys:
            labels += [("a", wk), ("b", wk)]
        walls = []
        for w, wk in enumerate(L.wall_keys):
            wt = L.pocset.weights[w]
            walls += [((wk, "a"), wt, L.births[w]), ((wk, "b"), wt, L.births[w])]

        def tree_side(l, wk):
            return (L.bits[l] >> L.wall_index[wk]) & 1

        def side(label, key):
            wk, t = key
            kind, x = label
            if kind == "v":
                return tree_side(x, wk)
            if x == wk:
                return 1 if kind == t else 0
            return tree_side(edges[x][0], wk)

        return level_from_geometry(self.spec, n, labels, walls, side, ("v", L.basepoint))

    def embed(self, label):
        return ("v", label)

    def lift(self, g: Automorphism) -> Automorphism:
        def fwd(hk, f=g.fwd):
            (wk, t), s = hk
            wk2, s2 = f((wk, s))
            return ((wk2, t if s2 == s else _other(t)), s2)

        def bwd(hk, b=g.bwd):
            (wk, t), s = hk
            wk2, s2 = b((wk, s))
            return ((wk2, t if s2 == s else _other(t)), s2)

        def vmap(label, f=g.fwd, vf=g.vfwd):
            kind, x = label
            if kind == "v":
                return ("v", vf(x))
            return (kind, f((x, 1))[0])

        def vinv(label, b=g.bwd, vb=g.vbwd):
            kind, x = label
            if kind == "v":
                return ("v", vb(x))
            return (kind, b((x, 1))[0])

        return Automorphism(g.name, fwd, bwd, vmap, vinv, g.shrinkage, g.orientation)

    def automorphisms(self):
        return {name: self.lift(g) for name, g in self.tree.automorphisms().items()}

    def boundary_points(self):
        out = {}
        for name, xi in self.tree.boundary_points().items():
            out[name] = BoundaryPoint(name, lambda key, s=xi.side: s(key[0]))
        return out


def _other(t: str) -> str:
    return {"a": "b", "b": "a", "lo": "hi", "hi": "lo"}[t]


class Product(GrowingComplex):
    """``X1 x X2`` with the l1 metric; wall keys are ``(0, k1)`` and ``(1, k2)``."""

    kind = "product"

    def __init__(self, left: GrowingComplex, right: GrowingComplex, spec: str | None = None):
        self.left, self.right = left, right
        self.declared_rank = left.declared_rank + right.declared_rank
        self.rank_stable_from = max(left.rank_stable_from, right.rank_stable_from)
        super().__init__(spec or f"product:{left.spec}|{right.spec}",
                         max(left.default_depth, right.default_depth))

    def _child_depth(self, child: GrowingComplex, n: int) -> int:
        # each factor grows from its own default depth
        return max(0, child.default_depth + n - self.default_depth)

    def vertex_estimate(self, n: int) -> int | None:
        a = self.left.vertex_estimate(self._child_depth(self.left, n))
        b = self.right.vertex_estimate(self._child_depth(self.right, n))
        return None if a is None or b is None else a * b

    def factor_levels(self, n: int) -> tuple:
        return (self.left.level(self._child_depth(self.left, n)),
                self.right.level(self._child_depth(self.right, n)))

    def _build(self, n: int) -> Level:
        A, B = self.factor_levels(n)
        P1, P2 = A.pocset, B.pocset
        W1, n1 = P1.walls, P1.size
        up = []
        for h in range(n1):
            up.append(P1.up[h])
        for h in range(P2.size):
            up.append(P2.up[h] << n1)
        P = WeightedPocset(W1 + P2.walls, tuple(up), P1.weights + P2.weights)
        keys = tuple((0, k) for k in A.wall_keys) + tuple((1, k) for k in B.wall_keys)
        # factor births are in factor depth coordinates
        oa = self.default_depth - self.left.default_depth
        ob = self.default_depth - self.right.default_depth
        births = tuple(b + oa if b else 0 for b in A.births) + tuple(b + ob if b else 0 for b in B.births)
        labels = tuple(itertools.product(A.labels, B.labels))
        bits = {(a, b): A.bits[a] | (B.bits[b] << W1) for a, b in labels}
        return Level(self.spec, n, P, keys, births, labels, bits, (A.basepoint, B.basepoint))

    @staticmethod
    def pair(name: str, g1: Automorphism, g2: Automorphism) -> Automorphism:
        def fwd(hk):
            (i, k), s = hk
            k2, s2 = (g1 if i == 0 else g2).fwd((k, s))
            return ((i, k2), s2)

        def bwd(hk):
            (i, k), s = hk
            k2, s2 = (g1 if i == 0 else g2).bwd((k, s))
            return ((i, k2), s2)

        if g1.vfwd is not None and g2.vfwd is not None:
            vf = lambda l: (g1.vfwd(l[0]), g2.vfwd(l[1]))
            vb = lambda l: (g1.vbwd(l[0]), g2.vbwd(l[1]))
        else:
            vf = vb = None
        o = g1.orientation if g1.orientation == g2.orientation else None
        return Automorphism(name, fwd, bwd, vf, vb, max(g1.shrinkage, g2.shrinkage), o)

    def automorphisms(self):
        out = {}
        for (a, g1), (b, g2) in itertools.product(sorted(self.left.automorphisms().items()),
                                                  sorted(self.right.automorphisms().items())):
            name = "id" if a == b == "id" else f"{a}|{b}"
            out[name] = self.pair(name, g1, g2)
        return out

    def boundary_points(self):
        out = {}
        for (a, x1), (b, x2) in itertools.product(sorted(self.left.boundary_points().items()),
                                                  sorted(self.right.boundary_points().items())):
            out[f"{a}|{b}"] = BoundaryPoint(
                f"{a}|{b}", lambda key, s1=x1.side, s2=x2.side: s1(key[1]) if key[0] == 0 else s2(key[1]))
        return out

    # closed form when both factors have one
    @property
    def has_closed_form(self):  # type: ignore[override]
        return self.left.has_closed_form and self.right.has_closed_form


class BarycentricSubdivision(GrowingComplex):
    """Each wall ``w`` of ``X`` split into ``(w, 'lo')`` and ``(w, 'hi')`` of half weight.

    Coordinate across ``w`` runs from 0 (side 0) to 1 (side 1); the new
    walls sit at 1/4 and 3/4, so side 1 of ``hi`` lies inside side 1 of
    ``lo``.  A vertex is labelled by the pair of base labels read off its
    ``lo`` walls and its ``hi`` walls; original vertices are ``(v, v)``.
    """

    kind = "sd"

    def __init__(self, base: GrowingComplex, spec: str | None = None):
        self.base = base
        self.declared_rank = base.declared_rank
        self.rank_stable_from = base.rank_stable_from
        super().__init__(spec or f"sd:{base.spec}", base.default_depth)

    def _build(self, n: int) -> Level:
        X = self.base.level(n)
        P = X.pocset
        keys, births, weights = [], [], []
        for w, wk in enumerate(X.wall_keys):
            for t in ("lo", "hi"):
                keys.append((wk, t))
                births.append(X.births[w])
                weights.append(P.weights[w] / 2)
        pairs = []
        for w in range(P.walls):
            lo, hi = 2 * w, 2 * w + 1  # new wall indices
            pairs.append((2 * hi + 1, 2 * lo + 1))
        for h in range(P.size):
            for k in iter_bits(P.up[h]):
                if k >> 1 == h >> 1:
                    continue
                for th in (0, 1):
                    for tk in (0, 1):
                        pairs.append((2 * (2 * (h >> 1) + th) + (h & 1),
                                      2 * (2 * (k >> 1) + tk) + (k & 1)))
        Q = WeightedPocset.from_pairs(2 * P.walls, pairs, weights)
        base_bits = self._embed_bits(X, X.base)
        R = realize(Q, Ultrafilter(base_bits, Q.walls))
        bits = {}
        for v in R.vertices:
            lo = int(format(v.bits, f"0{2 * P.walls}b")[1::2] or "0", 2)
            hi = int(format(v.bits, f"0{2 * P.walls}b")[0::2] or "0", 2)
            bits[(X.label_of_bits[lo], X.label_of_bits[hi])] = v.bits
        labels = tuple(bits)
        base = (X.basepoint, X.basepoint)
        return Level(self.spec, n, Q, tuple(keys), tuple(births), labels, bits, base)

    @staticmethod
    def _embed_bits(X: Level, u: Ultrafilter) -> int:
        bits = 0
        for w in range(X.walls):
            if (u.bits >> w) & 1:
                bits |= 3 << (2 * w)
        return bits

    def embed(self, n: int, u: Ultrafilter) -> Ultrafilter:
        """Image of an original vertex at depth ``n``."""
        X = self.base.level(n)
        return Ultrafilter(self._embed_bits(X, u), 2 * X.walls)

    def project(self, level: Level, h: int):
        """Halfspace key in the base complex under the projection."""
        (wk, _), s = level.hkey(h)
        return (wk, s)

    def lift(self, g: Automorphism) -> Automorphism:
        def fwd(hk, f=g.fwd):
            (wk, t), s = hk
            wk2, s2 = f((wk, s))
            return ((wk2, t if s2 == s else _other(t)), s2)

        def bwd(hk, b=g.bwd):
            (wk, t), s = hk
            wk2, s2 = b((wk, s))
            return ((wk2, t if s2 == s else _other(t)), s2)

        if g.vfwd is None or g.orientation is None:
            return Automorphism(g.name, fwd, bwd, None, None, g.shrinkage, None)
        if g.orientation == 1:
            vf = lambda l, f=g.vfwd: (f(l[0]), f(l[1]))
            vb = lambda l, b=g.vbwd: (b(l[0]), b(l[1]))
        else:
            # reversing every side swaps which base vertex the lo walls see
            vf = lambda l, f=g.vfwd: (f(l[1]), f(l[0]))
            vb = lambda l, b=g.vbwd: (b(l[1]), b(l[0]))
        return Automorphism(g.name, fwd, bwd, vf, vb, g.shrinkage, g.orientation)

    def automorphisms(self):
        return {name: self.lift(g) for name, g in self.base.automorphisms().items()}

    def boundary_points(self):
        out = {}
        for name, xi in self.base.boundary_points().items():
            out[name] = BoundaryPoint(name, lambda key, s=xi.side: s(key[0]))
        return out


# ----------------------------------------------------------------------
# public constructors


def line(n: int = 8, weight=1, margin: int = 0) -> Line:
    return Line(n, weight, margin)


def grid(dims: Sequence[int] = (2, 2), weights=None, margin: int = 0) -> Grid:
    return Grid(dims, weights, margin)


def regular_tree(degree: int = 3, depth: int = 3, weight=1) -> RegularTree:
    return RegularTree(degree, depth, weight)


def strip(n: int = 8, width: int = 2, margin: int = 0) -> Strip:
    return Strip(n, width, margin)


def tree_of_squares(tree: GrowingComplex) -> TreeOfSquares:
    return TreeOfSquares(tree)


def product(X1: GrowingComplex, X2: GrowingComplex) -> Product:
    return Product(X1, X2)


def barycentric_subdivision(X: GrowingComplex) -> BarycentricSubdivision:
    return BarycentricSubdivision(X)


# ----------------------------------------------------------------------
# spec strings
#
#   line:n=8,weight=1/2,m=1   line:8
#   grid:dims=2x3,weights=1/2x3,m=0   grid:2x2
#   tree:3:4 (degree, depth)   strip:n=8,w=2,m=1   strip:8:2
#   tos:<tree spec>   sd:<spec>   product:<spec>|<spec>[|<spec> ...]

_POSITIONAL = {
    "line": ["n", "weight", "m"],
    "grid": ["dims", "weights", "m"],
    "tree": ["degree", "depth", "weight"],
    "strip": ["n", "w", "m"],
}


def _split_top(s: str, sep: str) -> list[tuple[str, int]]:
    """Split on ``sep`` outside brackets, keeping start offsets."""
    out, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            out.append((s[start:i], start))
            start = i + 1
    out.append((s[start:], start))
    return out


def parse_space(spec: str, offset: int = 0) -> GrowingComplex:
    """Build a generator from a spec string such as ``"strip:n=8,w=2"``."""
    spec = spec.strip()
    if not spec:
        raise SpaceError("empty space spec", offset + 1)
    head, _, rest = spec.partition(":")
    col = offset + len(head) + 2
    if head == "product":
        parts = _split_top(rest, "|")
        if len(parts) < 2:
            raise SpaceError("product needs at least two factors separated by '|'", col)
        X = parse_space(parts[0][0], col - 1 + parts[0][1])
        for p, off in parts[1:]:
            Y = parse_space(p, col - 1 + off)
            X = Product(X, Y, spec=f"product:{X.spec}|{Y.spec}")
        X.spec = spec
        return X
    if head == "tos":
        T = parse_space(rest, col - 1)
        return TreeOfSquares(T, spec=spec)
    if head == "sd":
        return BarycentricSubdivision(parse_space(rest, col - 1), spec=spec)
    if head not in _POSITIONAL:
        raise SpaceError(f"unknown generator {head!r}", offset + 1)
    params: dict[str, str] = {}
    if rest:
        tokens = re.split(r"[,:]", rest)
        pos = 0
        cur = col
        for tok in tokens:
            if not tok:
                raise SpaceError("empty parameter", cur)
            if "=" in tok:
                k, v = tok.split("=", 1)
            else:
                names = _POSITIONAL[head]
                if pos >= len(names):
                    raise SpaceError(f"too many positional parameters for {head}", cur)
                k, v = names[pos], tok
                pos += 1
            if k not in _POSITIONAL[head]:
                raise SpaceError(f"unknown parameter {k!r} for {head}", cur)
            params[k] = v
            cur += len(tok) + 1
    try:
        if head == "line":
            return Line(int(params.get("n", 8)), params.get("weight", "1"),
                        int(params.get("m", 0)), spec=spec)
        if head == "strip":
            return Strip(int(params.get("n", 8)), int(params.get("w", 2)),
                         int(params.get("m", 0)), spec=spec)
        if head == "tree":
            return RegularTree(int(params.get("degree", 3)), int(params.get("depth", 3)),
                               params.get("weight", "1"), spec=spec)
        dims = [int(x) for x in params.get("dims", "2x2").split("x")]
        ws = params.get("weights")
        weights = ws.split("x") if ws else None
        return Grid(dims, weights, int(params.get("m", 0)), spec=spec)
    except SpaceError as exc:
        if exc.column is None:
            raise SpaceError(str(exc), col) from None
        raise
    except ValueError as exc:
        raise SpaceError(f"bad parameter value in {spec!r}: {exc}", col) from None
