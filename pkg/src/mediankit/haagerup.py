"""Halfspace vectors, the Haagerup cocycle and coboundary approximants.

Vectors here are finitely supported functions on *abstract* halfspaces,
keyed by ``(wall_key, side)``, each wall carrying its weight.  Keying by
abstract halfspaces makes the action of an automorphism total: a vector
never falls off the truncation when it is moved, and the weighted inner
product is preserved by construction.

Two ways to obtain the weights ``alpha`` along a boundary set are provided:
from a dense truncation (:func:`profile_from_ubs`), and, for lattice
generators, from the closed-form inclusion test without building the level
(:func:`closed_form_profile`).  The second is what makes large ``c``
reachable; the two agree wherever both run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .pocset import distance, iter_bits, ids_of
from .spaces import Automorphism, BoundaryPoint, GrowingComplex, Level, OutOfDomain
from .ubs import (
    MIN_DEPTH,
    UBS,
    UBSError,
    alpha_map,
    construct_xK,
    fixes_boundary,
    sigma_difference,
)

__all__ = [
    "HalfspaceVector", "indicator", "signed_indicator", "haagerup_cocycle", "f_c", "g_c",
    "AlphaProfile", "profile_from_ubs", "closed_form_profile", "ubs_convergence_experiment",
    "elementarity_witness", "fit_decay_exponent", "WitnessReport",
]


class HaagerupError(ValueError):
    pass


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# ----------------------------------------------------------------------
# vectors


@dataclass
class HalfspaceVector:
    """Sparse exact vector in ``L^2`` of the halfspaces.

    ``coeffs`` maps ``(wall_key, side)`` to a nonzero Fraction and
    ``weights`` maps every wall key in the support to its weight.
    """

    coeffs: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {k: v if type(v) is Fraction else Fraction(v)
                       for k, v in self.coeffs.items() if v}
        for (wk, _s) in self.coeffs:
            if wk not in self.weights:
                raise HaagerupError(f"no weight for wall {wk!r}")

    @classmethod
    def zero(cls) -> "HalfspaceVector":
        return cls({}, {})

    def _combine(self, other: "HalfspaceVector", sign: int) -> "HalfspaceVector":
        out = dict(self.coeffs)
        get = out.get
        if sign > 0:
            for k, v in other.coeffs.items():
                out[k] = get(k, 0) + v
        else:
            for k, v in other.coeffs.items():
                out[k] = get(k, 0) - v
        w = dict(self.weights)
        w.update(other.weights)
        return HalfspaceVector(out, w)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return HalfspaceVector({k: -v for k, v in self.coeffs.items()}, dict(self.weights))

    def scale(self, t) -> "HalfspaceVector":
        t = _frac(t)
        return HalfspaceVector({k: t * v for k, v in self.coeffs.items()}, dict(self.weights))

    def __eq__(self, other):
        return isinstance(other, HalfspaceVector) and self.coeffs == other.coeffs

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, hkey) -> Fraction:
        return self.coeffs.get(hkey, Fraction(0))

    def support(self) -> set:
        return set(self.coeffs)

    def inner(self, other: "HalfspaceVector") -> Fraction:
        a, b = (self, other) if len(self) <= len(other) else (other, self)
        s = Fraction(0)
        for k, v in a.coeffs.items():
            u = b.coeffs.get(k)
            if u is not None:
                s += a.weights[k[0]] * v * u
        return s

    def norm2(self) -> Fraction:
        """Squared ``L^2`` norm."""
        return sum((self.weights[k[0]] * v * v for k, v in self.coeffs.items()), Fraction(0))

    def norm_p_p(self, p: int) -> Fraction:
        """``sum weight * |v|^p`` for a positive integer ``p``."""
        if p < 1:
            raise HaagerupError("p must be a positive integer")
        return sum((self.weights[k[0]] * abs(v) ** p for k, v in self.coeffs.items()), Fraction(0))

    def act(self, g: Automorphism) -> "HalfspaceVector":
        """``(g v)(g h) = v(h)``; weights travel with the walls."""
        out = {}
        w = {}
        for k, v in self.coeffs.items():
            k2 = g.fwd(k)
            out[k2] = v
            w[k2[0]] = self.weights[k[0]]
        return HalfspaceVector(out, w)

    def to_json_dict(self) -> dict:
        items = sorted(([_listify(k), str(v)] for k, v in self.coeffs.items()),
                       key=lambda r: json.dumps(r[0]))
        weights = sorted(([_listify(k), str(v)] for k, v in self.weights.items()
                          if any(h[0] == k for h in self.coeffs)), key=lambda r: json.dumps(r[0]))
        return {"coeffs": items, "weights": weights}

    @classmethod
    def from_json_dict(cls, data: dict) -> "HalfspaceVector":
        coeffs = {_tuplify(k): Fraction(v) for k, v in data["coeffs"]}
        weights = {_tuplify(k): Fraction(v) for k, v in data["weights"]}
        return cls(coeffs, weights)


def _listify(x):
    if isinstance(x, tuple):
        return [_listify(y) for y in x]
    return x


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(y) for y in x)
    return x


def _level_weights(level: Level) -> dict:
    return {key: level.pocset.weights[w] for w, key in enumerate(level.wall_keys)}


def _ids(A) -> list[int]:
    return ids_of(A) if isinstance(A, int) else sorted(set(A))


def indicator(level: Level, A) -> HalfspaceVector:
    """``1_A`` for a mask or iterable of halfspace ids of ``level``."""
    W = _level_weights(level)
    ids = _ids(A)
    return HalfspaceVector({level.hkey(h): 1 for h in ids}, {level.wall_keys[h >> 1]: W[level.wall_keys[h >> 1]] for h in ids})


def signed_indicator(level: Level, A) -> HalfspaceVector:
    """``1_A - 1_{A*}``; ``A`` must not contain both sides of a wall."""
    ids = _ids(A)
    s = set(ids)
    clash = [h for h in ids if h ^ 1 in s]
    if clash:
        raise HaagerupError(f"set meets its complement on walls {sorted({h >> 1 for h in clash})}")
    return indicator(level, ids) - indicator(level, [h ^ 1 for h in ids])


def _signed_keys(keys: Iterable, weights: dict, values=None) -> HalfspaceVector:
    """``sum v(h) (1_h - 1_{h*})`` over abstract halfspace keys."""
    out = {}
    w = {}
    for i, (wk, s) in enumerate(keys):
        v = Fraction(1) if values is None else values[i]
        out[(wk, s)] = out.get((wk, s), 0) + v
        out[(wk, 1 - s)] = out.get((wk, 1 - s), 0) - v
        w[wk] = weights[wk]
    return HalfspaceVector(out, w)


# ----------------------------------------------------------------------
# cocycle


def _vertex(level: Level, x):
    return level.base if x is None else level.vertex(x)


def haagerup_cocycle(g: Automorphism, level: Level, x=None) -> HalfspaceVector:
    """``b^x(g) = g 1_{sigma_x} - 1_{sigma_x}``, computed as a signed indicator.

    Since ``g sigma_x = sigma_{gx}`` this is ``1_{sigma_gx \\ sigma_x} -
    1_{sigma_x \\ sigma_gx}``; ``gx`` must lie in the level.
    """
    u = _vertex(level, x)
    gu = g.apply_to_vertex(level, u)
    P = level.pocset
    diff = P.sides(gu.bits) & ~P.sides(u.bits)
    return signed_indicator(level, diff)


def displacement(g: Automorphism, level: Level, x=None) -> Fraction:
    u = _vertex(level, x)
    return distance(level.pocset, u, g.apply_to_vertex(level, u))


# ----------------------------------------------------------------------
# alpha profiles


@dataclass(frozen=True)
class AlphaProfile:
    """``alpha`` on the members of a boundary set, keyed by abstract halfspace."""

    depth: int
    keys: tuple              # members in a fixed order
    alpha: dict              # hkey -> Fraction
    weights: dict            # wall key -> Fraction, for every wall present
    horizon: Fraction | None  # smallest alpha on the outer band
    source: str

    def __contains__(self, hkey) -> bool:
        return hkey in self.alpha

    def has_wall(self, wk) -> bool:
        return wk in self.weights


def profile_from_ubs(omega: UBS) -> AlphaProfile:
    L = omega.level
    am = alpha_map(omega)
    B = omega.bands
    keys = tuple(L.hkey(h) for h in omega.members())
    horizon = min((am[h] for h in iter_bits(omega.mask & B.outer)), default=None)
    return AlphaProfile(L.depth, keys, {L.hkey(h): a for h, a in am.items()},
                        _level_weights(L), horizon, "dense")


def closed_form_profile(X: GrowingComplex, xi: BoundaryPoint, label, n: int,
                        exclude: Iterable = ()) -> AlphaProfile:
    """``alpha`` on ``(sigma_xi \\ sigma_label) \\ exclude`` at depth ``n`` without a level.

    Members are sorted by the generator's potential, covered by chains
    first-fit, and ``alpha(h)`` is the weight of the prefix of each chain
    containing ``h``, found by a monotone sweep.
    """
    if not X.has_closed_form:
        raise HaagerupError(f"{X.spec} has no closed-form inclusion test")
    exclude = set(exclude)
    rows = X.closed_form_walls(n)
    weights = {key: wt for key, wt, _ in rows}
    lo = (2 * n) // 3
    members = []
    outer = set()
    for key, _wt, birth in rows:
        s = xi.side(key)
        if X.side_of(label, key) != s and (key, s) not in exclude:
            members.append((key, s))
            if birth > lo:
                outer.add((key, s))
    members.sort(key=lambda hk: (X.potential(hk), hk))
    leq = X.closed_form_leq
    chains: list[list] = []
    for hk in members:
        for ch in chains:
            if leq(n, hk, ch[-1]):
                ch.append(hk)
                break
        else:
            chains.append([hk])
    # integer arithmetic over a common denominator keeps the sweep fast
    D = math.lcm(*(w.denominator for w in weights.values())) if weights else 1
    prefix = []
    for ch in chains:
        acc = [0]
        for hk in ch:
            acc.append(acc[-1] + int(weights[hk[0]] * D))
        prefix.append(acc)
    total = {hk: 0 for hk in members}
    for A in chains:
        for bi, Bc in enumerate(chains):
            p = 0
            for hk in A:
                while p < len(Bc) and leq(n, hk, Bc[p]):
                    p += 1
                total[hk] += prefix[bi][p]
    alpha = {hk: Fraction(v, D) for hk, v in total.items()}
    horizon = min((alpha[hk] for hk in outer), default=None)
    return AlphaProfile(n, tuple(members), alpha, weights, horizon, "closed-form")


# ----------------------------------------------------------------------
# approximants


def _cut(profile: AlphaProfile, c: Fraction) -> tuple[list, list]:
    keys = [hk for hk in profile.keys if profile.alpha[hk] <= c]
    vals = [-(1 - profile.alpha[hk] / c) for hk in keys]
    return keys, vals


def f_c(omega, c) -> HalfspaceVector:
    """``-(1 - alpha/c)`` on the members with ``alpha <= c``.

    ``omega`` is a :class:`UBS` or an :class:`AlphaProfile`.
    """
    c = _frac(c)
    if c <= 0:
        raise HaagerupError("c must be positive")
    prof = profile_from_ubs(omega) if isinstance(omega, UBS) else omega
    keys, vals = _cut(prof, c)
    return HalfspaceVector(dict(zip(keys, vals)), {hk[0]: prof.weights[hk[0]] for hk in keys})


def g_c(pieces: Sequence, c) -> HalfspaceVector:
    """``sum_i -(1 - alpha_i/c) 2_{(piece_i)_c}``, alpha taken inside each piece."""
    c = _frac(c)
    if c <= 0:
        raise HaagerupError("c must be positive")
    out = HalfspaceVector.zero()
    for p in pieces:
        prof = profile_from_ubs(p) if isinstance(p, UBS) else p
        keys, vals = _cut(prof, c)
        out = out + _signed_keys(keys, prof.weights, vals)
    return out


# ----------------------------------------------------------------------
# convergence experiment


def _omega_minus_image(profile: AlphaProfile, g: Automorphism, reach: Fraction) -> tuple[list, list]:
    """Members ``h`` with ``alpha <= reach`` of ``Omega \\ g Omega`` and of ``g Omega \\ Omega``."""
    lost = []
    gained = []
    for hk in profile.keys:
        if profile.alpha[hk] > reach:
            continue
        pre = g.bwd(hk)
        if pre not in profile:
            if not profile.has_wall(pre[0]):
                raise OutOfDomain(f"{g.name} pulls {hk!r} outside depth {profile.depth}; add a margin")
            lost.append(hk)
        img = g.fwd(hk)
        if not profile.has_wall(img[0]):
            raise OutOfDomain(f"{g.name} pushes {hk!r} outside depth {profile.depth}")
        if img not in profile:
            gained.append(img)
    return lost, gained


@dataclass(frozen=True)
class ResidualRow:
    c: Fraction
    depth: int
    residual_sq: Fraction
    direction: int
    clipped: bool

    @property
    def residual_float(self) -> float:
        return math.sqrt(self.residual_sq)

    def csv(self) -> str:
        return f"{self.c},{self.depth},{self.residual_sq},{self.residual_float:.12g}"


def _profile(X: GrowingComplex, xi: BoundaryPoint, x, n: int, closed_form: bool | None) -> AlphaProfile:
    use = X.has_closed_form if closed_form is None else closed_form
    if use:
        label = x if x is not None else X.level(MIN_DEPTH).basepoint
        return closed_form_profile(X, xi, label, n)
    return profile_from_ubs(sigma_difference(X, xi, x, n, check_stability=False))


def convergence_residual(g: Automorphism, profile: AlphaProfile, c) -> ResidualRow:
    """``||(g - 1) F_c - t 1_{Omega \\ g Omega}||^2`` with ``t = +1`` (or ``-1``
    with target ``1_{g Omega \\ Omega}`` when ``g`` enlarges the set)."""
    c = _frac(c)
    F = f_c(profile, c)
    span = max((profile.alpha[hk] for hk in F.coeffs), default=Fraction(0))
    reach = max(span, c) + 1
    if profile.horizon is not None:
        reach = min(reach, profile.horizon)
    lost, gained = _omega_minus_image(profile, g, reach)
    if lost and gained:
        raise HaagerupError(f"containment direction of {g.name} is indeterminate")
    direction = -1 if gained and not lost else 1
    if direction == 1:
        target = HalfspaceVector({hk: 1 for hk in lost}, {hk[0]: profile.weights[hk[0]] for hk in lost})
    else:
        target = HalfspaceVector({hk: -1 for hk in gained}, {hk[0]: profile.weights[hk[0]] for hk in gained})
    R = F.act(g) - F - target
    clipped = profile.horizon is not None and span + 1 >= profile.horizon
    return ResidualRow(c, profile.depth, R.norm2(), direction, clipped)


def ubs_convergence_experiment(X: GrowingComplex, g: Automorphism, xi: BoundaryPoint,
                               c_list: Sequence, depth_list: Sequence[int], x=None,
                               closed_form: bool | None = None) -> dict:
    """Residual table over ``c`` and depth, with the fitted decay exponent per depth."""
    rows = []
    fits = {}
    for n in depth_list:
        prof = _profile(X, xi, x, n, closed_form)
        block = [convergence_residual(g, prof, c) for c in c_list]
        rows.extend(block)
        pts = [(r.c, r.residual_sq) for r in block if r.residual_sq > 0 and not r.clipped]
        fits[n] = fit_decay_exponent(pts) if len(pts) >= 3 else None
    return {"rows": rows, "beta": fits}


def fit_decay_exponent(points: Sequence[tuple]) -> float:
    """Least-squares ``beta`` in ``residual ~ c^-beta`` from ``(c, residual^2)`` pairs."""
    c = np.array([float(p[0]) for p in points])
    r = np.sqrt(np.array([float(p[1]) for p in points]))
    slope, _ = np.polyfit(np.log(c), np.log(r), 1)
    return float(-slope)


def residual_csv(rows: Sequence[ResidualRow]) -> str:
    lines = ["c,depth,residual_exact,residual_float"]
    lines += [r.csv() for r in rows]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# elementarity witness


@dataclass
class WitnessReport:
    psi: HalfspaceVector
    residuals: dict          # generator name -> exact squared residual
    method: str              # "orbit" or "recipe"
    c: Fraction | None
    depth: int
    success: bool
    epsilon: Fraction
    x_K: object = None
    trail: list = field(default_factory=list)  # (c, depth, max residual^2)

    def max_residual_sq(self) -> Fraction:
        return max(self.residuals.values(), default=Fraction(0))

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "success": self.success,
            "epsilon": str(self.epsilon),
            "c": None if self.c is None else str(self.c),
            "depth": self.depth,
            "x_K": repr(self.x_K),
            "residual_sq": {k: str(v) for k, v in sorted(self.residuals.items())},
            "residual": {k: float(math.sqrt(v)) for k, v in sorted(self.residuals.items())},
            "trail": [[str(c), n, str(r)] for c, n, r in self.trail],
            "psi_support": len(self.psi),
        }


def _orbit(level: Level, gens: Sequence[Automorphism], label, limit: int) -> list | None:
    """Orbit of ``label`` inside the level, or None when it escapes or grows past ``limit``."""
    seen = [label]
    known = {label}
    i = 0
    while i < len(seen):
        cur = seen[i]
        i += 1
        for g in gens:
            for f in (g, g.inverse()):
                if f.vfwd is None:
                    return None
                y = f.vfwd(cur)
                if y not in level.bits:
                    return None
                if y not in known:
                    known.add(y)
                    seen.append(y)
                    if len(seen) > limit:
                        return None
    return seen


def _separating_signed(level: Level, a, b) -> HalfspaceVector:
    """``1_{sigma_a} - 1_{sigma_b}`` as a finite vector."""
    P = level.pocset
    ua, ub = level.vertex(a), level.vertex(b)
    return signed_indicator(level, P.sides(ua.bits) & ~P.sides(ub.bits))


def _residuals_dense(level: Level, gens, x, psi: HalfspaceVector) -> dict:
    out = {}
    for g in gens:
        b = haagerup_cocycle(g, level, x)
        out[g.name] = (b - (psi.act(g) - psi)).norm2()
    return out


def _lattice_cocycle(X: GrowingComplex, g: Automorphism, label, n: int) -> HalfspaceVector:
    """``b^x(g)`` from the generator's abstract side test; no level built."""
    gl = g.vfwd(label)
    keys = []
    weights = {}
    for key, wt, _ in X.closed_form_walls(n):
        weights[key] = wt
        s = X.side_of(gl, key)
        if s != X.side_of(label, key):
            keys.append((key, s))
    return _signed_keys(keys, weights)


def elementarity_witness(X: GrowingComplex, gens: Sequence[Automorphism], xi: BoundaryPoint | None,
                         epsilon=Fraction(1, 100), x=None, c_schedule: Sequence | None = None,
                         depth: int | None = None, budget_walls: int = 2_000_000,
                         orbit_limit: int = 10_000) -> WitnessReport:
    """Search ``psi`` with ``||b^x(g) - (g psi - psi)|| < epsilon`` for every generator.

    A finite orbit gives the exact coboundary of the orbit mean.  Otherwise
    the generators must fix ``xi``: ``x_K`` and its pieces come from a dense
    truncation, and ``psi = G_c + 1_{sigma_x} - 1_{sigma_{x_K}}`` is tried for
    ``c`` along the schedule, deepening until the cut sets are unclipped.
    """
    eps = _frac(epsilon)
    if eps <= 0:
        raise HaagerupError("epsilon must be positive")
    gens = [g for g in gens if g.name != "id"]
    first = depth if depth is not None else X.default_depth
    L0 = X.level(first)
    x0 = L0.basepoint if x is None else x
    orb = _orbit(L0, gens, x0, orbit_limit) if gens else [x0]
    if orb is not None:
        # psi = 1_{sigma_x} - mean over the orbit of 1_{sigma_y}
        psi = HalfspaceVector.zero()
        for y in orb:
            psi = psi + _separating_signed(L0, x0, y)
        psi = psi.scale(Fraction(1, len(orb)))
        res = _residuals_dense(L0, gens, x0, psi)
        ok = all(r < eps * eps for r in res.values())
        return WitnessReport(psi, res, "orbit", None, first, ok, eps)
    if xi is None:
        raise HaagerupError("unbounded orbit and no boundary point given")
    base_depth = max(first, MIN_DEPTH)
    L0 = X.level(base_depth)
    for g in gens:
        if not fixes_boundary(g, xi, L0):
            raise HaagerupError(f"{g.name} does not fix the boundary point {xi.name}")
    omega = sigma_difference(X, xi, x0, base_depth, check_stability=False)
    xk = construct_xK(omega, gens)
    if c_schedule is None:
        c_schedule = [Fraction(4) ** k for k in range(1, 11)]
    trail = []
    best = None
    closed = X.has_closed_form and len(xk.pieces) == 1
    if closed:
        L = omega.level
        dropped = set(L.hkey(h) for h in iter_bits(sigma_difference(X, xi, xk.label, base_depth,
                                                                     check_stability=False).mask
                                                   & ~xk.pieces[0].mask))
        # rate of alpha growth per depth step, to size the truncation
        probe = closed_form_profile(X, xi, xk.label, base_depth, dropped)
        rate = (probe.horizon or Fraction(1)) / base_depth
    n = base_depth
    for c in c_schedule:
        c = _frac(c)
        while True:
            if closed:
                need = int((c + 4) / rate * Fraction(11, 10)) + MIN_DEPTH
                n = max(n, need)
                if 2 * X.axes() * n > budget_walls:
                    break
                prof = closed_form_profile(X, xi, xk.label, n, dropped)
                if prof.horizon:
                    rate = prof.horizon / n
                if prof.horizon is None or prof.horizon <= c + 2:
                    n *= 2
                    continue
                phi = g_c([prof], c)
                shift = _lattice_key_shift(X, xi, x0, xk.label, n)
                psi = phi + shift
                res = {}
                for g in gens:
                    b = _lattice_cocycle(X, g, x0, n)
                    res[g.name] = (b - (psi.act(g) - psi)).norm2()
            else:
                n = max(n, base_depth)
                L = X.level(n)
                if L.pocset.walls > budget_walls:
                    break
                om = sigma_difference(X, xi, x0, n, check_stability=False)
                try:
                    xkn = construct_xK(om, gens)
                except (UBSError, OutOfDomain):
                    n *= 2
                    continue
                profs = [profile_from_ubs(p) for p in xkn.pieces]
                if any(p.horizon is None or p.horizon <= c + 2 for p in profs):
                    n = n * 2
                    if X.level(n).pocset.walls > budget_walls:
                        break
                    continue
                phi = g_c(xkn.pieces, c)
                psi = phi + (_separating_signed(L, x0, xkn.label) if xkn.label != x0
                             else HalfspaceVector.zero())
                res = _residuals_dense(L, gens, x0, psi)
            worst = max(res.values(), default=Fraction(0))
            trail.append((c, n, worst))
            if best is None or worst < best[0]:
                best = (worst, psi, res, c, n)
            if worst < eps * eps:
                return WitnessReport(psi, res, "recipe", c, n, True, eps, xk.label, trail)
            break
    if best is None:
        return WitnessReport(HalfspaceVector.zero(), {}, "recipe", None, n, False, eps, xk.label, trail)
    worst, psi, res, c, n = best
    return WitnessReport(psi, res, "recipe", c, n, False, eps, xk.label, trail)


def _lattice_key_shift(X: GrowingComplex, xi, a, b, n: int) -> HalfspaceVector:
    """``1_{sigma_a} - 1_{sigma_b}`` from abstract side tests."""
    if a == b:
        return HalfspaceVector.zero()
    keys = []
    weights = {}
    for key, wt, _ in X.closed_form_walls(n):
        weights[key] = wt
        s = X.side_of(a, key)
        if s != X.side_of(b, key):
            keys.append((key, s))
    return _signed_keys(keys, weights)
