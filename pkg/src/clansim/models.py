"""Concrete animal models.

Every model here is translation invariant: its animals are translates of a
finite list of shapes (vertex sets with optional links), and ``kind`` is the
shape index.  Incompatibility, halos and the interaction function are closed
forms per model.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

from .animals import Animal, AnimalModel
from .lattice import Site, box, diameter, sup_dist, translate, unit_vectors

Shape = tuple[tuple[Site, ...], tuple[tuple[Site, Site], ...]]

_TABLE_PROBE = 64


def _normalize_shape(vertices: Iterable[Sequence[int]], links=()) -> Shape:
    verts = sorted(set(tuple(int(v) for v in s) for s in vertices))
    if not verts:
        raise ValueError("a shape needs at least one site")
    origin = verts[0]
    shift = tuple(-c for c in origin)
    verts = tuple(sorted(translate(verts, shift)))
    links = tuple(sorted(tuple(sorted(translate(l, shift))) for l in links))
    return verts, links


def connected_link_shapes(d: int, max_links: int, min_links: int = 1) -> list[Shape]:
    """Connected nearest-neighbour link sets with ``min_links..max_links`` links.

    Shapes are returned once per translation class, normalized so that the
    lexicographically smallest vertex is the origin.
    """
    if max_links < 0 or min_links < 0:
        raise ValueError("link counts must be nonnegative")
    units = unit_vectors(d)
    origin = (0,) * d

    def canon(links: frozenset) -> tuple:
        verts = {v for l in links for v in l}
        return _normalize_shape(verts, links)

    found: dict[tuple, None] = {}
    if min_links == 0:
        found[((origin,), ())] = None
    level = {canon(frozenset({(origin, units[i])})) for i in range(d)} if max_links >= 1 else set()
    size = 1
    while level and size <= max_links:
        if size >= min_links:
            for s in sorted(level):
                found[s] = None
        if size == max_links:
            break
        nxt = set()
        for verts, links in level:
            have = set(links)
            for v in verts:
                for e in units:
                    for w in (tuple(a + b for a, b in zip(v, e)), tuple(a - b for a, b in zip(v, e))):
                        link = tuple(sorted((v, w)))
                        if link not in have:
                            nxt.add(canon(frozenset(have | {link})))
        level = nxt
        size += 1
    return list(found)


class ShapeModel(AnimalModel):
    """Translates of a fixed list of shapes."""

    def __init__(self, d: int, shapes: Sequence[Shape]):
        super().__init__(d)
        if not shapes:
            raise ValueError("at least one shape is required")
        norm = []
        for verts, links in shapes:
            nv, nl = _normalize_shape(verts, links)
            if any(len(s) != self.d for s in nv):
                raise ValueError(f"shape {nv} does not live in dimension {self.d}")
            norm.append((nv, nl))
        self.shapes: tuple[Shape, ...] = tuple(norm)
        self._ell1 = max(diameter(v) for v, _ in self.shapes)
        self._containing: dict[Site, tuple[Animal, ...]] = {}

    @property
    def ell1(self) -> float:
        return float(self._ell1)

    def make(self, germ: Sequence[int], kind: int = 0) -> Animal:
        """The animal of shape ``kind`` translated by ``germ``."""
        verts, links = self.shapes[kind]
        germ = tuple(int(g) for g in germ)
        return Animal(translate(verts, germ), kind,
                      (translate(l, germ) for l in links), self.tag)

    def animals_containing(self, x: Site) -> list[Animal]:
        x = tuple(x)
        hit = self._containing.get(x)
        if hit is None:
            out = []
            for k, (verts, _) in enumerate(self.shapes):
                for v in verts:
                    out.append(self.make(tuple(a - b for a, b in zip(x, v)), k))
            hit = tuple(sorted(set(out)))
            self._containing[x] = hit
        return list(hit)

    def owns(self, animal: Animal) -> bool:
        if not isinstance(animal, Animal) or animal.family != self.tag:
            return False
        if not 0 <= animal.kind < len(self.shapes):
            return False
        return animal == self.make(animal.germ, animal.kind)

    def _shapes_config(self):
        return [{"sites": [list(s) for s in v], "links": [[list(a), list(b)] for a, b in l]}
                for v, l in self.shapes]


def _overlap(a: Animal, b: Animal) -> bool:
    return not a.sites.isdisjoint(b.sites)


class HardCoreModel(ShapeModel):
    """Volume exclusion: animals sharing a site can never coexist.

    Two shapes with the same vertex set are kept as distinct kinds, which
    gives several mutually exclusive animals on one support.
    """

    name = "hardcore"
    deterministic = True

    @classmethod
    def single_site(cls, d: int = 1) -> "HardCoreModel":
        return cls(d, [[(0,) * d]])

    @classmethod
    def domino(cls, d: int = 2) -> "HardCoreModel":
        origin = (0,) * d
        return cls(d, [[origin, e] for e in unit_vectors(d)])

    def __init__(self, d: int = 1, shapes: Sequence = None):
        if shapes is None:
            shapes = [[(0,) * int(d)]]
        parsed = [([tuple(v) for v in shape], ()) for shape in shapes]
        super().__init__(d, parsed)

    @property
    def ell2(self) -> float:
        return 0.0

    def _incompatible(self, a, b):
        return _overlap(a, b)

    def halo(self, a):
        return a.sites

    def _interaction(self, a, others):
        s = a.sites
        for b in others:
            if not s.isdisjoint(b.sites):
                return 0.0
        return 1.0

    def to_config(self):
        return {"name": self.name, "d": self.d, "shapes": [sh["sites"] for sh in self._shapes_config()]}


def _table_function(spec, n_max: int | None, what: str) -> tuple[Callable[[int], float], list[float], str]:
    """Turn a penalty specification into (function, probe table, description).

    ``spec`` may be a callable, a list (values past the end repeat the last
    one) or a dict with ``type`` in free / hardcore / power / table.
    """
    if callable(spec):
        fn, desc = spec, getattr(spec, "__qualname__", repr(spec))
    elif isinstance(spec, Mapping):
        kind = spec.get("type")
        if kind == "free":
            fn, desc = (lambda n: 1.0), "free"
        elif kind == "hardcore":
            fn, desc = (lambda n: 1.0 if n == 0 else 0.0), "hardcore"
        elif kind == "power":
            beta = float(spec["beta"])
            fn, desc = (lambda n, beta=beta: beta ** n), f"power:{beta!r}"
        elif kind == "table":
            return _table_function(list(spec["values"]), n_max, what)
        else:
            raise ValueError(f"unknown {what} type {kind!r}")
    else:
        values = [float(v) for v in spec]
        if not values:
            raise ValueError(f"{what} table is empty")
        fn = (lambda n, v=tuple(values): v[n] if n < len(v) else v[-1])
        desc = "table:" + ",".join(repr(v) for v in values)
    top = n_max if n_max is not None else _TABLE_PROBE
    table = [float(fn(n)) for n in range(top + 1)]
    for n, v in enumerate(table):
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise ValueError(f"{what}({n}) = {v} lies outside [0, 1]")
    return fn, table, desc


class AreaInteractionModel(ShapeModel):
    """Grains x+G; a birth is accepted with probability F(covered sites of the new grain)."""

    name = "area_interaction"

    def __init__(self, grain: Sequence[Sequence[int]], F=None, d: int | None = None):
        grain = [tuple(int(v) for v in s) for s in grain]
        d = len(grain[0]) if d is None else d
        super().__init__(d, [(grain, ())])
        self.grain_size = len(self.shapes[0][0])
        self._F, self.F_table, self._F_desc = _table_function(
            F if F is not None else {"type": "hardcore"}, self.grain_size, "F")
        self.interacting = len(set(self.F_table)) > 1
        self.deterministic = all(v in (0.0, 1.0) for v in self.F_table)
        self.attractive = all(x <= y for x, y in zip(self.F_table, self.F_table[1:]))

    @property
    def ell2(self) -> float:
        # grains interact only through overlap
        return 0.0

    def _incompatible(self, a, b):
        return self.interacting and _overlap(a, b)

    def halo(self, a):
        return a.sites

    def _interaction(self, a, others):
        covered = set()
        for b in others:
            covered |= b.sites
        return self.F_table[len(a.sites & covered)]

    def to_config(self):
        return {"name": self.name, "d": self.d, "grain": [list(s) for s in self.shapes[0][0]],
                "F": {"type": "table", "values": self.F_table}}


class StraussModel(ShapeModel):
    """Single-site animals penalized by the number of points within distance r."""

    name = "strauss"

    def __init__(self, r: int = 1, penalty=None, d: int = 1):
        if r < 1:
            raise ValueError("the Strauss radius must be >= 1")
        super().__init__(d, [([(0,) * int(d)], ())])
        self.r = int(r)
        self._penalty, table, self._pen_desc = _table_function(
            penalty if penalty is not None else {"type": "hardcore"}, None, "penalty")
        self.penalty_table = table
        self.interacting = len(set(table)) > 1
        self.deterministic = all(v in (0.0, 1.0) for v in table)
        self._ball = box((0,) * self.d, self.r)

    @property
    def ell2(self) -> float:
        return float(self.r) if self.interacting else 0.0

    def _incompatible(self, a, b):
        return self.interacting and sup_dist(a.germ, b.germ) <= self.r

    def halo(self, a):
        if not self.interacting:
            return a.sites
        return frozenset(translate(self._ball, a.germ))

    def _interaction(self, a, others):
        x, r = a.germ, self.r
        k = sum(1 for b in others if sup_dist(x, b.germ) <= r)
        return float(self._penalty(k))

    def to_config(self):
        return {"name": self.name, "d": self.d, "r": self.r, "penalty": self._pen_desc}


class LossNetworkModel(ShapeModel):
    """Calls are connected link sets; a call is refused if any link is full."""

    name = "loss_network"

    def __init__(self, max_len: int = 1, capacity=1, d: int = 1):
        super().__init__(d, connected_link_shapes(d, max_len))
        self.max_len = int(max_len)
        if isinstance(capacity, Mapping):
            default = capacity.get("default", 1)
            overrides = {}
            for a, b, c in capacity.get("links", []):
                overrides[tuple(sorted((tuple(a), tuple(b))))] = c
            self._capacity_fn = lambda link: overrides.get(link, default)
            self._cap_desc = {"default": default,
                              "links": sorted([list(map(list, k)) + [v] for k, v in overrides.items()])}
        elif callable(capacity):
            self._capacity_fn = capacity
            self._cap_desc = getattr(capacity, "__qualname__", repr(capacity))
        else:
            capacity = math.inf if capacity in (None, "inf") else float(capacity)
            self._capacity_fn = lambda link, c=capacity: c
            self._cap_desc = capacity if math.isfinite(capacity) else "inf"
        self._cap_cache: dict = {}

    def capacity(self, link) -> float:
        c = self._cap_cache.get(link)
        if c is None:
            c = self._capacity_fn(link)
            if c is None or c == "inf":
                c = math.inf
            c = float(c)
            if c < 1:
                raise ValueError(f"capacity of {link} must be >= 1")
            self._cap_cache[link] = c
        return c

    @property
    def ell2(self) -> float:
        return 0.0

    def _incompatible(self, a, b):
        shared = set(a.links).intersection(b.links)
        return any(math.isfinite(self.capacity(l)) for l in shared)

    def halo(self, a):
        return a.sites

    def _interaction(self, a, others):
        load: dict = {}
        mine = set(a.links)
        for b in others:
            for l in b.links:
                if l in mine:
                    load[l] = load.get(l, 0) + 1
        for l in a.links:
            if load.get(l, 0) + 1 > self.capacity(l):
                return 0.0
        return 1.0

    def to_config(self):
        return {"name": self.name, "d": self.d, "max_len": self.max_len, "capacity": self._cap_desc}


class RandomClusterModel(ShapeModel):
    """Clusters are connected link sets; clusters sharing a vertex exclude each other."""

    name = "random_cluster"

    def __init__(self, max_links: int = 1, d: int = 1, min_links: int = 1):
        super().__init__(d, connected_link_shapes(d, max_links, min_links))
        self.max_links = int(max_links)
        self.min_links = int(min_links)

    @property
    def ell2(self) -> float:
        return 0.0

    def _incompatible(self, a, b):
        return _overlap(a, b)

    def halo(self, a):
        return a.sites

    def _interaction(self, a, others):
        s = a.sites
        return 0.0 if any(not s.isdisjoint(b.sites) for b in others) else 1.0

    def to_config(self):
        return {"name": self.name, "d": self.d, "max_links": self.max_links, "min_links": self.min_links}


def random_cluster_weights(site_values: Mapping[Site, float], link_values: Mapping) -> Callable[[Animal], float]:
    """Rate map for clusters: product of J/(1-J) over links times 1/J over sites."""
    for link, j in link_values.items():
        if not 0.0 < j < 1.0:
            raise ValueError(f"link value {j} at {link} lies outside (0, 1)")
    for site, j in site_values.items():
        if not j > 0.0:
            raise ValueError(f"site value {j} at {site} must be positive")

    def rate(animal: Animal) -> float:
        w = 1.0
        for l in animal.links:
            j = link_values[l]
            w *= j / (1.0 - j)
        for s in animal.support:
            w /= site_values[s]
        return w

    return rate


def free_model(d: int = 1) -> AreaInteractionModel:
    """Single-site animals with no interaction at all (M identically 1)."""
    return AreaInteractionModel([(0,) * d], {"type": "free"}, d)


def make_model(config: Mapping) -> AnimalModel:
    """Build a model from its configuration dictionary."""
    name = config["name"]
    d = int(config.get("d", 1))
    if name == "hardcore":
        if config.get("shape") == "domino":
            return HardCoreModel.domino(d)
        shapes = config.get("shapes")
        if shapes is None:
            return HardCoreModel.single_site(d)
        return HardCoreModel(d, [[tuple(s) for s in shape] for shape in shapes])
    if name == "area_interaction":
        return AreaInteractionModel([tuple(s) for s in config.get("grain", [[0] * d])],
                                    config.get("F", {"type": "hardcore"}), d)
    if name == "free":
        return free_model(d)
    if name == "strauss":
        return StraussModel(int(config.get("r", 1)), config.get("penalty", {"type": "hardcore"}), d)
    if name == "loss_network":
        return LossNetworkModel(int(config.get("max_len", 1)), config.get("capacity", 1), d)
    if name == "random_cluster":
        return RandomClusterModel(int(config.get("max_links", 1)), d, int(config.get("min_links", 1)))
    raise ValueError(f"unknown model {name!r}")


__all__ = [
    "AreaInteractionModel", "HardCoreModel", "LossNetworkModel", "RandomClusterModel",
    "ShapeModel", "StraussModel", "connected_link_shapes", "free_model", "make_model",
    "random_cluster_weights",
]
