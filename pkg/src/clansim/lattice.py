"""Sites, sup-norm geometry and boxes on Z^d."""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

Site = tuple[int, ...]


def as_site(x: Iterable[int]) -> Site:
    """Coerce an iterable of integers into a site tuple."""
    site = tuple(int(v) for v in x)
    if not site:
        raise ValueError("a site needs at least one coordinate")
    return site


def sup_norm(x: Sequence[int]) -> int:
    return max(abs(v) for v in x)


def sup_dist(x: Sequence[int], y: Sequence[int]) -> int:
    return max(abs(a - b) for a, b in zip(x, y))


def set_distance(a: Iterable[Site], b: Iterable[Site]) -> int:
    """Smallest sup-norm distance between two finite site sets."""
    b = tuple(b)
    return min(sup_dist(x, y) for x in a for y in b)


def diameter(sites: Iterable[Site]) -> int:
    """Sup-norm diameter; 0 for empty or single-site sets."""
    sites = tuple(sites)
    if len(sites) < 2:
        return 0
    d = len(sites[0])
    return max(max(s[i] for s in sites) - min(s[i] for s in sites) for i in range(d))


def translate(sites: Iterable[Site], shift: Sequence[int]) -> tuple[Site, ...]:
    return tuple(tuple(a + b for a, b in zip(s, shift)) for s in sites)


def box(center: Sequence[int], radius: float) -> list[Site]:
    """All sites y with ``sup_dist(y, center) <= radius``, in lexicographic order."""
    if radius < 0:
        return []
    r = int(math.floor(radius + 1e-12))
    axes = [range(c - r, c + r + 1) for c in center]
    return [tuple(p) for p in itertools.product(*axes)]


def shell(center: Sequence[int], inner: float, outer: float) -> list[Site]:
    """Sites with ``inner < sup_dist(y, center) <= outer``."""
    return [s for s in box(center, outer) if sup_dist(s, center) > inner + 1e-12]


def dilate(region: Iterable[Site], radius: int) -> frozenset[Site]:
    """Union of sup-norm balls of the given radius around every site."""
    out: set[Site] = set()
    offsets = None
    for s in region:
        if offsets is None:
            offsets = box((0,) * len(s), radius)
        out.update(tuple(a + b for a, b in zip(s, o)) for o in offsets)
    return frozenset(out)


def distance_to_complement(x: Site, region: frozenset[Site] | set[Site]) -> int:
    """Sup distance from ``x`` to the nearest site outside ``region``."""
    if x not in region:
        return 0
    k = 1
    while True:
        ring = shell(x, k - 1, k)
        if any(s not in region for s in ring):
            return k
        k += 1


def unit_vectors(d: int) -> list[Site]:
    return [tuple(1 if i == j else 0 for j in range(d)) for i in range(d)]


def nearest_neighbour_links(sites: Iterable[Site]) -> list[tuple[Site, Site]]:
    """Links (x, x+e_i) with both endpoints in ``sites``."""
    sites = set(sites)
    out = []
    for s in sorted(sites):
        for e in unit_vectors(len(s)):
            t = tuple(a + b for a, b in zip(s, e))
            if t in sites:
                out.append((s, t))
    return out
