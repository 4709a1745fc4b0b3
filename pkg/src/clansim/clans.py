"""Backward clan exploration, keep/erase cleaning and perfect sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._parallel import map_replicas
from .animals import AnimalConfiguration
from .environment import Environment, RegionError
from .free_process import Cylinder, FreeProcess
from .lattice import Site, diameter, distance_to_complement, sup_dist
from .stats import Estimate, linear_fit, log_tail_fit, mean_estimate, proportion

CLOSED = "closed"
ESCAPED_SPACE = "escaped-space"
ESCAPED_TIME = "escaped-time"
BUDGET_EXCEEDED = "budget-exceeded"


class ContractViolation(RuntimeError):
    """An operation was called outside its precondition."""


@dataclass(frozen=True)
class ClanLimits:
    """Exploration budget.  ``max_radius=None`` means "as far as the window is safe"."""

    max_radius: float | None = None
    max_depth_time: float = math.inf
    max_cylinders: int = 1_000_000


@dataclass(frozen=True)
class ClanStats:
    tl: float
    sd: int
    ss: int
    n_cylinders: int
    n_generations: int


@dataclass
class Clan:
    """Ancestor clan of a space-time point or of a set of cylinders."""

    root: object
    generations: list[tuple[Cylinder, ...]]
    status: str
    stats: ClanStats
    ancestors: dict = field(repr=False, default_factory=dict)
    members: tuple[Cylinder, ...] = ()
    reference_time: float = 0.0
    model: object = field(default=None, repr=False)

    @property
    def closed(self) -> bool:
        return self.status == CLOSED

    @property
    def first(self) -> tuple[Cylinder, ...]:
        return self.generations[0] if self.generations else ()


@dataclass(frozen=True)
class KeepErasePartition:
    kept: frozenset
    erased: frozenset
    layers: tuple[tuple[Cylinder, ...], ...]


def first_generation(process: FreeProcess, c: Cylinder) -> tuple[Cylinder, ...]:
    """Incompatible cylinders alive at the birth of ``c`` (``c`` itself excluded)."""
    out = []
    t = c.birth
    for theta in process.env.incompatible_animals(c.basis):
        for other in process.alive_at(theta, t):
            if other is not c:
                out.append(other)
    out.sort(key=Cylinder.sort_key)
    return tuple(out)


def _stats(members: Sequence[Cylinder], t: float, n_gen: int) -> ClanStats:
    if not members:
        return ClanStats(0.0, 0, 0, 0, 0)
    sites = set()
    for c in members:
        sites.update(c.basis.support)
    tl = t - min(c.birth for c in members)
    return ClanStats(max(tl, 0.0), diameter(sites), len(sites), len(members), n_gen)


def _explore(process: FreeProcess, roots: Sequence[Cylinder], t: float, limits: ClanLimits,
             origin: Site | None, root_label) -> Clan:
    ancestors: dict[Cylinder, tuple[Cylinder, ...]] = {}
    discovered: dict[Cylinder, None] = {}
    generations: list[tuple[Cylinder, ...]] = []
    status = CLOSED
    radius = limits.max_radius

    def admit(c: Cylinder) -> str | None:
        discovered[c] = None
        if len(discovered) > limits.max_cylinders:
            return BUDGET_EXCEEDED
        if origin is not None and radius is not None and \
                max(sup_dist(s, origin) for s in c.basis.support) > radius:
            return ESCAPED_SPACE
        if t - c.birth > limits.max_depth_time:
            return ESCAPED_TIME
        return None

    current = tuple(sorted(set(roots), key=Cylinder.sort_key))
    for c in current:
        status = admit(c) or status
        if status != CLOSED:
            break
    while current and status == CLOSED:
        generations.append(current)
        nxt: dict[Cylinder, None] = {}
        for c in current:
            anc = ancestors.get(c)
            if anc is None:
                anc = first_generation(process, c)
                ancestors[c] = anc
                for a in anc:
                    if a not in discovered:
                        problem = admit(a)
                        if problem:
                            status = problem
                            break
            if status != CLOSED:
                break
            for a in anc:
                nxt[a] = None
        current = tuple(sorted(nxt, key=Cylinder.sort_key))
    members = tuple(sorted(discovered, key=Cylinder.sort_key))
    return Clan(root_label, generations, status, _stats(members, t, len(generations)),
                ancestors, members, t, process.env.model)


def default_radius(env: Environment, x: Site) -> int:
    """Largest radius around ``x`` whose clans see a complete neighbourhood in the window."""
    ell0 = int(math.ceil(env.model.ell1 + env.model.ell2))
    return distance_to_complement(tuple(x), env.region) - ell0 - 1


def clan_of_point(env: Environment, x: Sequence[int], t: float = 0.0, limits: ClanLimits | None = None,
                  seed: int = 0, replica: int = 0, process: FreeProcess | None = None) -> Clan:
    """Breadth-first backward clan of the space-time point ``(x, t)``.

    Escapes are reported in ``status`` and never raised.
    """
    x = tuple(int(v) for v in x)
    limits = limits or ClanLimits()
    if limits.max_radius is None:
        limits = ClanLimits(default_radius(env, x), limits.max_depth_time, limits.max_cylinders)
    if process is None:
        process = FreeProcess(env, seed, replica, top=t)
    roots = [c for a in env.animals_containing(x) for c in process.alive_at(a, t)]
    return _explore(process, roots, t, limits, x, (x, t))


def clan_of_cylinders(process: FreeProcess, roots: Iterable[Cylinder], t: float,
                      limits: ClanLimits | None = None) -> Clan:
    """Joint clan of a set of cylinders (no spatial limit)."""
    roots = list(roots)
    return _explore(process, roots, t, limits or ClanLimits(), None, tuple(roots))


def keep_erase(clan: Clan, model=None) -> KeepErasePartition:
    """Decide which cylinders of a closed clan survive the interaction.

    Cylinders without ancestors are tested against M(γ | ∅); every other
    cylinder is kept iff its mark does not exceed M evaluated on the bases
    of its kept ancestors.  Ancestors are always born earlier, so layers
    (longest ancestor-chain height) give a valid evaluation order.
    """
    if clan.status != CLOSED:
        raise ContractViolation(f"keep/erase needs a closed clan, got {clan.status}")
    anc = clan.ancestors
    height: dict[Cylinder, int] = {}
    for c in clan.members:  # sorted by birth: ancestors come first
        stack = [c]
        while stack:
            top = stack[-1]
            if top in height:
                stack.pop()
                continue
            pending = [a for a in anc.get(top, ()) if a not in height]
            if pending:
                stack.extend(pending)
                continue
            hs = [height[a] for a in anc.get(top, ())]
            height[top] = 1 + max(hs) if hs else 0
            stack.pop()
    n_layers = 1 + max(height.values()) if height else 0
    layers = [[] for _ in range(n_layers)]
    for c in clan.members:
        layers[height[c]].append(c)
    model = model or clan.model
    kept: set[Cylinder] = set()
    for layer in layers:
        for c in layer:
            live = [a.basis for a in anc.get(c, ()) if a in kept]
            if c.mark <= model._interaction(c.basis, live):
                kept.add(c)
    members = frozenset(clan.members)
    return KeepErasePartition(frozenset(kept), members - kept, tuple(tuple(l) for l in layers))


@dataclass
class PerfectSample:
    configuration: AnimalConfiguration | None
    status: str
    stats: ClanStats
    n_roots: int


def perfect_sample(env: Environment, region: Iterable[Site] | None = None, limits: ClanLimits | None = None,
                   seed: int = 0, replica: int = 0, t: float = 0.0,
                   process: FreeProcess | None = None) -> PerfectSample:
    """Exact draw of the invariant measure with animals confined to ``region``.

    All cylinders alive at time ``t`` with basis inside ``region`` are
    explored backwards; the kept ones form the sample.  If the budget is
    hit the configuration is ``None`` and the status says why.
    """
    region = env.region if region is None else frozenset(tuple(s) for s in region)
    if not region <= env.region:
        missing = region - env.region
        far = max(distance_to_complement(tuple(s), env.region) for s in region if s in env.region) \
            if region & env.region else 0
        raise RegionError(f"sample region exceeds the environment window by {len(missing)} sites; "
                          f"enlarge the window to cover them (margin found {far})")
    sub = env.restricted(region)
    if process is None:
        process = FreeProcess(sub, seed, replica, top=t)
    elif process.env is not sub:
        process = process.restricted(region)
    roots = [c for a in sub.animals() for c in process.alive_at(a, t)]
    clan = clan_of_cylinders(process, roots, t, limits)
    if clan.status != CLOSED:
        return PerfectSample(None, clan.status, clan.stats, len(roots))
    part = keep_erase(clan, env.model)
    config = AnimalConfiguration()
    for c in roots:
        if c in part.kept:
            config[c.basis] += 1
    return PerfectSample(config, CLOSED, clan.stats, len(roots))


def _sample_one(replica, env, region, limits, seed, t):
    s = perfect_sample(env, region, limits, seed, replica, t)
    return s


def perfect_samples(env: Environment, n: int, region=None, limits: ClanLimits | None = None,
                    seed: int = 0, t: float = 0.0, workers: int = 1) -> list[PerfectSample]:
    """``n`` independent perfect samples (replica ``i`` uses substream ``i``)."""
    region = None if region is None else sorted(tuple(s) for s in region)
    return map_replicas(_sample_one, n, env, region, limits, seed, t, workers=workers)


@dataclass
class TailTable:
    """Empirical tails of clan statistics at one site."""

    site: Site
    replicas: int
    status_counts: dict
    tl_rows: list[tuple[float, Estimate]]
    sd_rows: list[tuple[float, Estimate]]
    mean_ss: Estimate | None
    samples: list[ClanStats] = field(repr=False, default_factory=list)

    def sd_fit(self):
        return log_tail_fit([L for L, _ in self.sd_rows], [e.value for _, e in self.sd_rows])

    def tl_fit(self, q: float):
        xs = [math.log1p(T) ** q for T, _ in self.tl_rows]
        return log_tail_fit(xs, [e.value for _, e in self.tl_rows])


def _clan_one(replica, env, x, limits, seed):
    c = clan_of_point(env, x, 0.0, limits, seed, replica)
    return c.status, c.stats


def clan_tail_estimates(env: Environment, x: Sequence[int], thresholds: dict, replicas: int,
                        seed: int = 0, limits: ClanLimits | None = None, workers: int = 1,
                        confidence: float = 0.95) -> TailTable:
    """Empirical P(TL > T), P(SD > L) and mean SS over clans of ``(x, 0)``.

    Only closed clans enter the estimates; the other outcomes are counted
    in ``status_counts``.
    """
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    x = tuple(int(v) for v in x)
    results = map_replicas(_clan_one, replicas, env, x, limits, seed, workers=workers)
    counts = {CLOSED: 0, ESCAPED_SPACE: 0, ESCAPED_TIME: 0, BUDGET_EXCEEDED: 0}
    for status, _ in results:
        counts[status] += 1
    closed = [s for status, s in results if status == CLOSED]
    n = len(closed)
    tl_rows, sd_rows = [], []
    if n:
        for T in thresholds.get("T", []):
            tl_rows.append((float(T), proportion(sum(s.tl > T for s in closed), n, confidence)))
        for L in thresholds.get("L", []):
            sd_rows.append((float(L), proportion(sum(s.sd > L for s in closed), n, confidence)))
    mean_ss = mean_estimate([s.ss for s in closed], confidence) if n > 1 else None
    return TailTable(x, replicas, counts, tl_rows, sd_rows, mean_ss, closed)


__all__ = [
    "BUDGET_EXCEEDED", "CLOSED", "Clan", "ClanLimits", "ClanStats", "ContractViolation", "ESCAPED_SPACE",
    "ESCAPED_TIME", "KeepErasePartition", "PerfectSample", "TailTable", "clan_of_cylinders",
    "clan_of_point", "clan_tail_estimates", "default_radius", "first_generation", "keep_erase",
    "linear_fit", "perfect_sample", "perfect_samples",
]
