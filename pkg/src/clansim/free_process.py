"""The free (non-interacting) cylinder process.

Each animal γ carries an independent stationary M/M/∞ queue with arrival
rate w(γ) and unit service rate.  The realization is generated lazily per
animal and backwards in time: death times are produced in decreasing order
from a fixed top time, which lets any window be extended to the past
without changing what has already been drawn.

Backward construction for one animal with rate ``w`` and top time ``s``:
the death times form a Poisson process with intensity ``w e^{-(e-s)}`` for
``e > s`` (copies alive at ``s``) and ``w`` for ``e < s``.  Mapping unit
arrivals through the inverse cumulative intensity gives the deaths in
decreasing order.  A copy alive at ``s`` was born ``Exp(1)`` before ``s``
(memorylessness); a copy dying at ``e < s`` lived ``Exp(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._rng import check_seed, stream_key
from .animals import Animal
from .environment import Environment, RegionError

_CHUNK = 8


@dataclass(frozen=True, eq=False)
class Cylinder:
    """An animal together with its life interval and acceptance mark.

    Equality is by identity: two cylinders are the same only if they are the
    same draw.  ``index`` is the position in the animal's backward stream.
    """

    basis: Animal
    birth: float
    death: float
    mark: float
    truncated: bool = False
    index: int = -1

    @property
    def lifetime(self) -> float:
        return self.death - self.birth

    def alive_at(self, t: float) -> bool:
        return self.birth <= t <= self.death

    def sort_key(self) -> tuple:
        return (self.birth, self.basis.key, self.index)

    def __repr__(self) -> str:
        return (f"Cylinder({self.basis!r}, birth={self.birth:.6g}, death={self.death:.6g}, "
                f"mark={self.mark:.4f}{', truncated' if self.truncated else ''})")


class _AnimalStream:
    """Lazily generated cylinders of one animal, ordered by decreasing death.

    With ``cap`` set, copies are generated at rate ``cap`` and each is kept
    with probability ``rate / cap`` using its own uniform.  Streams that
    share a key and a cap are then coupled monotonically in the rate.
    """

    __slots__ = ("animal", "rate", "top", "rng", "gamma", "cylinders", "gen_rate", "keep", "n_drawn",
                 "last_death")

    def __init__(self, animal: Animal, rate: float, top: float, key: np.ndarray, cap: float | None = None):
        if cap is not None and rate > cap:
            raise ValueError(f"rate {rate} exceeds the dominating rate {cap}")
        self.animal = animal
        self.rate = rate
        self.top = top
        self.gen_rate = rate if cap is None else float(cap)
        self.keep = None if cap is None else rate / float(cap)
        self.rng = np.random.Generator(np.random.Philox(key=key)) if rate > 0 else None
        self.gamma = 0.0
        self.cylinders: list[Cylinder] = []
        self.n_drawn = 0
        self.last_death = math.inf

    def _extend(self, n: int) -> None:
        rng, w, s = self.rng, self.gen_rate, self.top
        arrivals = self.gamma + np.cumsum(rng.standard_exponential(n))
        ages = rng.standard_exponential(n)
        marks = rng.random(n)
        thin = rng.random(n) if self.keep is not None else None
        self.gamma = float(arrivals[-1])
        for i in range(n):
            g = float(arrivals[i])
            if g <= w:
                death = s - math.log(g / w)
                birth = s - float(ages[i])
            else:
                death = s - (g - w) / w
                birth = death - float(ages[i])
            self.last_death = death
            if thin is None or thin[i] <= self.keep:
                self.cylinders.append(Cylinder(self.animal, birth, death, float(marks[i]), False,
                                               self.n_drawn + i))
        self.n_drawn += n

    def covering(self, t: float) -> list[Cylinder]:
        """Cylinders with death >= t, generated as far back as needed."""
        if self.rng is None:
            return []
        if t > self.top:
            raise ValueError(f"time {t} lies above the top {self.top} of the realization")
        n = _CHUNK
        while self.last_death >= t:
            self._extend(n)
            n = min(2 * n, 4096)
        cyl = self.cylinders
        # deaths are decreasing
        lo, hi = 0, len(cyl)
        while lo < hi:
            mid = (lo + hi) // 2
            if cyl[mid].death >= t:
                lo = mid + 1
            else:
                hi = mid
        return cyl[:lo]

    def alive_at(self, t: float) -> list[Cylinder]:
        return [c for c in self.covering(t) if c.birth <= t]


class FreeProcess:
    """Lazy realization of the free process of an environment.

    ``top`` is the latest time represented; queries must not exceed it.
    ``seed`` and ``replica`` select the realization: the stream of every
    animal is keyed by ``(seed, tag, replica, animal)``.  ``dominating_rate``
    switches to thinning from a common higher rate, which couples processes
    of different environments monotonically.
    """

    def __init__(self, env: Environment, seed: int = 0, replica: int = 0, top: float = 0.0,
                 tag: str = "free", dominating_rate: float | None = None):
        self.env = env
        self.dominating_rate = dominating_rate
        self.seed = check_seed(seed)
        self.replica = int(replica)
        self.top = float(top)
        self.tag = tag
        self._streams: dict[Animal, _AnimalStream] = {}

    def stream(self, animal: Animal) -> _AnimalStream:
        st = self._streams.get(animal)
        if st is None:
            st = _AnimalStream(animal, self.env.rate(animal), self.top,
                               stream_key(self.seed, self.tag, self.replica, animal.key),
                               self.dominating_rate)
            self._streams[animal] = st
        return st

    def alive_at(self, animal: Animal, t: float) -> list[Cylinder]:
        """Copies of ``animal`` whose closed life contains ``t``."""
        return self.stream(animal).alive_at(t)

    def covering(self, animal: Animal, t: float) -> list[Cylinder]:
        """Copies of ``animal`` that die at or after ``t`` (newest deaths first)."""
        return self.stream(animal).covering(t)

    def restricted(self, region: Iterable) -> "FreeProcess":
        """The same realization seen through a smaller spatial window."""
        sub = FreeProcess(self.env.restricted(region), self.seed, self.replica, self.top, self.tag,
                          self.dominating_rate)
        sub._streams = self._streams
        return sub


@dataclass(frozen=True)
class Window:
    region: frozenset
    t0: float
    t1: float

    def contains(self, other: "Window") -> bool:
        return other.region <= self.region and self.t0 <= other.t0 and other.t1 <= self.t1


@dataclass(frozen=True)
class CylinderConfiguration:
    """A materialized set of cylinders on a space-time window, sorted by birth."""

    window: Window
    cylinders: tuple[Cylinder, ...]
    env: Environment
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def model(self):
        return self.env.model

    @property
    def boundary_flags(self) -> bool:
        """Whether some cylinder was cut at the bottom of the window."""
        return any(c.truncated for c in self.cylinders)

    def __len__(self) -> int:
        return len(self.cylinders)

    def __iter__(self):
        return iter(self.cylinders)


def _clip(c: Cylinder, a: float, b: float) -> Cylinder | None:
    birth = max(c.birth, a)
    death = min(c.death, b)
    if death < birth:
        return None
    if birth == c.birth and death == c.death:
        return c
    return Cylinder(c.basis, birth, death, c.mark, c.truncated or c.birth < a, c.index)


def sample_window(env: Environment, region: Iterable | None = None, t0: float = -1.0, t1: float = 0.0,
                  seed: int = 0, replica: int = 0, process: FreeProcess | None = None) -> CylinderConfiguration:
    """Materialize the free process on ``region x [t0, t1]``.

    Cylinders alive at ``t0`` appear with birth ``t0`` and the truncation
    flag set; their law is the stationary one, since the realization
    extends to the infinite past.
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    region = env.region if region is None else frozenset(tuple(s) for s in region)
    if not region <= env.region:
        raise RegionError("window region is not covered by the environment")
    if process is None:
        process = FreeProcess(env, seed, replica, top=t1)
    elif process.top < t1:
        raise ValueError("process top lies below the window")
    total = env.total_rate(region)
    if not math.isfinite(total):
        raise OverflowError("total rate over the window is not finite")
    out = []
    for a in env.animals_in(region):
        for c in process.covering(a, t0):
            clipped = _clip(c, t0, t1)
            if clipped is not None:
                out.append(clipped)
    out.sort(key=Cylinder.sort_key)
    return CylinderConfiguration(Window(region, float(t0), float(t1)), tuple(out), env, process.seed,
                                 {"replica": process.replica})


def restrict(config: CylinderConfiguration, region: Iterable, a: float, b: float) -> CylinderConfiguration:
    """Keep cylinders with basis inside ``region`` and clip their lives to ``[a, b]``."""
    region = frozenset(tuple(s) for s in region)
    box_w = Window(region, float(a), float(b))
    if not a <= b or not config.window.contains(box_w):
        raise ValueError("box is not contained in the configuration window")
    out = []
    for c in config.cylinders:
        if c.basis.sites <= region:
            clipped = _clip(c, a, b)
            if clipped is not None:
                out.append(clipped)
    out.sort(key=Cylinder.sort_key)
    return CylinderConfiguration(box_w, tuple(out), config.env, config.seed, dict(config.meta))


def alive_at(config: CylinderConfiguration, t: float) -> list[Cylinder]:
    """Cylinders of the configuration alive at ``t`` (closed lives)."""
    w = config.window
    if not w.t0 <= t <= w.t1:
        raise ValueError("time outside the window")
    return [c for c in config.cylinders if c.birth <= t <= c.death]


def dump(config: CylinderConfiguration, fh, generations: dict | None = None) -> None:
    """Write one cylinder per line: ``basis_id birth lifetime mark truncated``."""
    w = config.window
    fh.write(f"# window t0={w.t0!r} t1={w.t1!r} sites={len(w.region)} seed={config.seed}\n")
    env = config.env
    for c in config.cylinders:
        line = f"{env.animal_id(c.basis)} {c.birth!r} {c.lifetime!r} {c.mark!r} {int(c.truncated)}"
        if generations is not None:
            line += f" {generations.get(c, -1)}"
        fh.write(line + "\n")


def count_alive(env: Environment, animal: Animal, t: float, seed: int, replicas: Sequence[int],
                top: float = 0.0) -> np.ndarray:
    """Number of copies of ``animal`` alive at ``t`` for each replica."""
    return np.array([len(FreeProcess(env, seed, r, top).alive_at(animal, t)) for r in replicas])


__all__ = ["Cylinder", "CylinderConfiguration", "FreeProcess", "Window", "alive_at", "count_alive",
           "dump", "restrict", "sample_window"]
