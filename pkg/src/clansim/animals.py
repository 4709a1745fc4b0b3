"""Animals, configurations, model geometry and the model plug-in contract."""

from __future__ import annotations

import hashlib
import json
import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._rng import substream
from .lattice import Site, diameter, set_distance, sup_dist, sup_norm


class ModelMismatchError(ValueError):
    """Raised when an animal is used with a model that did not create it."""


class Animal:
    """A finitely supported object on Z^d.

    Animals are immutable and hashable.  ``kind`` separates animals that share
    a support (for instance a horizontal and a vertical call on the same two
    sites would differ by their links).  ``family`` names the model that built
    the animal and is used only for mismatch checks.
    """

    __slots__ = ("support", "kind", "links", "family", "_hash", "_set")

    def __init__(self, support: Iterable[Site], kind: int = 0,
                 links: Iterable[tuple[Site, Site]] = (), family: str = ""):
        sup = tuple(sorted(set(tuple(int(v) for v in s) for s in support)))
        if not sup:
            raise ValueError("animal support must be nonempty")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "kind", int(kind))
        object.__setattr__(self, "links", tuple(sorted(tuple(sorted(l)) for l in links)))
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "_set", frozenset(sup))
        object.__setattr__(self, "_hash", hash((self.kind, self.support, self.links, family)))

    def __setattr__(self, name, value):
        raise AttributeError("Animal is immutable")

    def __reduce__(self):
        return (Animal, (self.support, self.kind, self.links, self.family))

    @property
    def sites(self) -> frozenset[Site]:
        return self._set

    @property
    def key(self) -> tuple:
        """Model-independent identity used to key random streams."""
        return (self.kind, self.support, self.links)

    @property
    def germ(self) -> Site:
        return self.support[0]

    @property
    def dim(self) -> int:
        return len(self.support[0])

    def __len__(self) -> int:
        return len(self.support)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._set

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Animal):
            return NotImplemented
        return (self._hash == other._hash and self.support == other.support
                and self.kind == other.kind and self.links == other.links
                and self.family == other.family)

    def __lt__(self, other: "Animal") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        body = f"support={list(self.support)}"
        if self.kind:
            body += f", kind={self.kind}"
        if self.links:
            body += f", links={list(self.links)}"
        return f"Animal({body})"


class AnimalConfiguration(Counter):
    """A finite multiset of animals (an element of N^G)."""

    def __init__(self, items=None, **kwargs):
        super().__init__()
        if items is None:
            return
        if isinstance(items, Mapping):
            for a, n in items.items():
                self._add(a, n)
        else:
            for a in items:
                self._add(a, 1)

    def _add(self, animal, n):
        if not isinstance(animal, Animal):
            raise TypeError("configurations hold Animal instances")
        if int(n) != n or n < 0:
            raise ValueError("multiplicities must be nonnegative integers")
        if n:
            self[animal] += int(n)

    def expanded(self) -> list[Animal]:
        """Animals listed with repetition, in a deterministic order."""
        out = []
        for a in sorted(self):
            out.extend([a] * self[a])
        return out

    def sites(self) -> set[Site]:
        return set().union(*(a.sites for a in self if self[a] > 0)) if self else set()


def default_delta(ell0: float, d: int, rule: str = "safe") -> float:
    """Boundary-shell width.

    ``"safe"`` returns ``max(3 * ell0, 2)``, which always has the crossing
    property.  ``"compact"`` returns ``3 (ell0 - 2) / (2 (d - 1))`` and is only
    defined for ``d >= 2``; :func:`verify_delta` can be used to test it.
    """
    if rule == "safe":
        return float(max(3 * ell0, 2))
    if rule == "compact":
        if d < 2:
            raise ValueError("the compact shell width needs d >= 2")
        return 3.0 * (ell0 - 2) / (2.0 * (d - 1))
    raise ValueError(f"unknown delta rule {rule!r}")


@dataclass(frozen=True)
class ModelGeometry:
    d: int
    ell1: float
    ell2: float
    delta: float

    @property
    def ell0(self) -> float:
        return self.ell1 + self.ell2

    @property
    def nontrivial(self) -> bool:
        """Whether ``ell0 > d + 1``, the standing assumption of the multiscale analysis."""
        return self.ell0 > self.d + 1

    @classmethod
    def for_model(cls, model: "AnimalModel", delta: float | None = None,
                  rule: str = "safe") -> "ModelGeometry":
        if delta is None:
            delta = default_delta(model.ell1 + model.ell2, model.d, rule)
        return cls(model.d, model.ell1, model.ell2, float(delta))


class AnimalModel(ABC):
    """Contract implemented by every concrete model.

    Subclasses provide enumeration of animals through a site, the
    incompatibility relation, halos and the interaction function M.
    """

    name = "abstract"
    deterministic = True

    def __init__(self, d: int):
        if int(d) < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)

    # geometry -------------------------------------------------------------
    @property
    @abstractmethod
    def ell1(self) -> float: ...

    @property
    @abstractmethod
    def ell2(self) -> float: ...

    def geometry(self, delta: float | None = None, rule: str = "safe") -> ModelGeometry:
        return ModelGeometry.for_model(self, delta, rule)

    @property
    def tag(self) -> str:
        """Stable identifier derived from the model parameters."""
        tag = self.__dict__.get("_tag")
        if tag is None:
            src = json.dumps(self.to_config(), sort_keys=True, default=repr)
            tag = f"{self.name}:{hashlib.blake2b(src.encode(), digest_size=6).hexdigest()}"
            self.__dict__["_tag"] = tag
        return tag

    def owns(self, animal: Animal) -> bool:
        return isinstance(animal, Animal) and animal.family == self.tag

    def check_owns(self, *animals: Animal) -> None:
        for a in animals:
            if not self.owns(a):
                raise ModelMismatchError(f"{a!r} does not belong to model {self.name}")

    # enumeration ----------------------------------------------------------
    @abstractmethod
    def animals_containing(self, x: Site) -> list[Animal]:
        """All animals whose support contains ``x`` (no region restriction)."""

    def animals_in(self, region) -> list[Animal]:
        """All animals with support inside ``region``, sorted."""
        region = region if isinstance(region, (set, frozenset)) else frozenset(region)
        seen = set()
        for x in region:
            for a in self.animals_containing(x):
                if a not in seen and a.sites <= region:
                    seen.add(a)
        return sorted(seen)

    # interaction ----------------------------------------------------------
    @abstractmethod
    def _incompatible(self, a: Animal, b: Animal) -> bool: ...

    @abstractmethod
    def halo(self, a: Animal) -> frozenset[Site]: ...

    @abstractmethod
    def _interaction(self, a: Animal, others: Sequence[Animal]) -> float:
        """M(a | others) where ``others`` lists animals with repetition."""

    def interaction(self, a: Animal, config: Mapping[Animal, int] | Iterable[Animal] = ()) -> float:
        if isinstance(config, Mapping):
            others = [b for b, n in sorted(config.items()) for _ in range(int(n))]
        else:
            others = list(config)
        return float(self._interaction(a, others))

    def size(self, a: Animal) -> float:
        """Default size function: number of sites."""
        return float(len(a.support))

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(d={self.d})"


def incompatible(a: Animal, b: Animal, model: AnimalModel) -> bool:
    """Whether the presence of ``b`` can change the birth probability of ``a``."""
    model.check_owns(a, b)
    return bool(model._incompatible(a, b))


def halo(a: Animal, model: AnimalModel) -> frozenset[Site]:
    """Sites that every animal incompatible with ``a`` must touch."""
    model.check_owns(a)
    return model.halo(a)


def enumerate_containing(x: Sequence[int], model: AnimalModel, region) -> list[Animal]:
    """Animals containing ``x`` whose support lies in ``region``."""
    region = region if isinstance(region, (set, frozenset)) else frozenset(map(tuple, region))
    x = tuple(x)
    if x not in region:
        return []
    return sorted(a for a in model.animals_containing(x) if a.sites <= region)


def _random_chain(rng: np.random.Generator, geo: ModelGeometry, L: int, max_steps: int):
    """A random chain of site sets (diameter <= ell1, gaps <= ell2) started at radius L."""
    d = geo.d
    l1, l2 = int(math.floor(geo.ell1)), int(math.floor(geo.ell2))
    greedy = rng.random() < 0.5

    def make_animal(anchor):
        if greedy:
            sign = np.sign(np.array(anchor))
            sign[sign == 0] = 1
            v = sign * l1
        else:
            v = rng.integers(-l1, l1 + 1, size=d)
        return frozenset({tuple(anchor), tuple(int(a + b) for a, b in zip(anchor, v))})

    start = [0] * d
    start[int(rng.integers(d))] = L if rng.random() < 0.5 else -L
    chain = [make_animal(start)]
    for _ in range(max_steps):
        cur = chain[-1]
        if max(sup_norm(s) for s in cur) > L + geo.delta:
            return chain
        base = max(cur, key=sup_norm) if greedy or rng.random() < 0.7 else sorted(cur)[rng.integers(len(cur))]
        if greedy:
            sign = np.sign(np.array(base))
            sign[sign == 0] = 1
            u = sign * l2
        else:
            u = rng.integers(-l2, l2 + 1, size=d)
        anchor = [int(a + b) for a, b in zip(base, u)]
        chain.append(make_animal(anchor))
    return None


def verify_delta(geometry: ModelGeometry, trials: int = 1000, seed: int = 0) -> bool:
    """Randomized check of the shell-crossing property.

    Builds ``trials`` random chains of site sets, each of diameter at most
    ``ell1`` and within ``ell2`` of its predecessor, starting inside
    Λ[0;L] and leaving Λ[0;L+δ].  Every crossing chain must place at least
    two of its members entirely inside the shell L < |y| <= L+δ.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = substream(seed, "verify_delta")
    L = int(max(4, 2 * geometry.ell0 + 2))
    for _ in range(trials):
        chain = _random_chain(rng, geometry, L, max_steps=int(4 * (geometry.delta + 2) + 8))
        if chain is None:
            continue
        inside = sum(1 for g in chain
                     if all(L < sup_norm(s) <= L + geometry.delta for s in g))
        if inside < 2:
            return False
    return True


__all__ = [
    "Animal", "AnimalConfiguration", "AnimalModel", "ModelGeometry", "ModelMismatchError",
    "default_delta", "enumerate_containing", "halo", "incompatible", "verify_delta",
    "diameter", "set_distance", "sup_dist",
]
