import itertools
from fractions import Fraction

import pytest
from hypothesis import settings

from mediankit.pocset import Ultrafilter, WeightedPocset

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")


def point_set_pocset(points, weights=None):
    """Pocset cut out of a finite point set in Z^k by the axis walls that split it.

    Returns the pocset and, per point, its wall bits.
    """
    k = len(points[0])
    masks, ws, cuts = [], [], []
    for a in range(k):
        vals = sorted({p[a] for p in points})
        for c in vals[:-1]:
            hi = 0
            for i, p in enumerate(points):
                if p[a] > c:
                    hi |= 1 << i
            full = (1 << len(points)) - 1
            if hi in masks:  # same split as an earlier cut
                continue
            masks += [full ^ hi, hi]
            ws.append(weights[a] if weights else 1)
            cuts.append((a, c))
    P = WeightedPocset.from_halfspace_sets(masks, ws)
    bits = []
    for p in points:
        b = 0
        for w, (a, c) in enumerate(cuts):
            if p[a] > c:
                b |= 1 << w
        bits.append(b)
    return P, bits


def brute_ultrafilters(P):
    """Every choice of sides with no two chosen halfspaces disjoint."""
    out = []
    for bits in range(1 << P.walls):
        chosen = [2 * w + ((bits >> w) & 1) for w in range(P.walls)]
        if all(not P.leq(h, k ^ 1) for h, k in itertools.combinations(chosen, 2)):
            out.append(Ultrafilter(bits, P.walls))
    return out


@pytest.fixture
def frac():
    return Fraction
