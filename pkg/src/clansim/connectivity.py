"""Open-path connections, connectivity estimates and (m, L)-regularity."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from ._parallel import map_replicas
from .environment import Environment, RegionError
from .free_process import Cylinder, CylinderConfiguration, FreeProcess
from .lattice import Site, box, shell, sup_dist
from .stats import Estimate, mean_estimate, proportion


class ArgumentOrderError(ValueError):
    """The target point lies later in time than the source point."""


@dataclass(frozen=True)
class SpaceTimePoint:
    x: Site
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(v) for v in self.x))
        object.__setattr__(self, "t", float(self.t))


def as_point(p) -> SpaceTimePoint:
    if isinstance(p, SpaceTimePoint):
        return p
    x, t = p
    return SpaceTimePoint(x, t)


@dataclass(frozen=True)
class Box:
    """Space-time box Λ[x; L+δ] x [t-T, t] around ``center``.

    The boundary is the bottom face Λ[x; L+δ] x {t-T} together with the
    shell Λ[x; L+δ] minus Λ[x; L], over the whole time span.  The top face
    is not part of it.
    """

    center: SpaceTimePoint
    L: float
    T: float
    delta: float

    @property
    def t_low(self) -> float:
        return self.center.t - self.T

    @property
    def t_high(self) -> float:
        return self.center.t

    @property
    def sites(self) -> list[Site]:
        return box(self.center.x, self.L + self.delta)

    @property
    def shell_sites(self) -> list[Site]:
        return shell(self.center.x, self.L, self.L + self.delta)

    def contains(self, p: SpaceTimePoint) -> bool:
        return (sup_dist(p.x, self.center.x) <= self.L + self.delta + 1e-12
                and self.t_low <= p.t <= self.t_high)


def _check_order(X: SpaceTimePoint, Y: SpaceTimePoint) -> None:
    if Y.t > X.t:
        raise ArgumentOrderError(f"target time {Y.t} is later than source time {X.t}")


def connected(config: CylinderConfiguration, X, Y) -> bool:
    """Whether an open path in ``config`` joins ``X`` to ``Y``.

    Consecutive cylinders of a path are incompatible, births strictly
    decrease along it, and each cylinder is alive at the birth of its
    predecessor (its life meets the predecessor's).
    """
    X, Y = as_point(X), as_point(Y)
    _check_order(X, Y)
    w = config.window
    for p in (X, Y):
        if p.x not in w.region or not w.t0 <= p.t <= w.t1:
            raise ValueError(f"{p} lies outside the configuration window")
    by_animal: dict = {}
    for c in config.cylinders:
        by_animal.setdefault(c.basis, []).append(c)
    env = config.env
    start = [c for c in config.cylinders if X.x in c.basis.sites and c.birth <= X.t <= c.death]
    seen = set(id(c) for c in start)
    queue = deque(start)
    while queue:
        c = queue.popleft()
        if Y.x in c.basis.sites and c.birth <= Y.t <= c.death:
            return True
        for theta in env.incompatible_animals(c.basis):
            for o in by_animal.get(theta, ()):
                if o.birth < c.birth <= o.death and id(o) not in seen:
                    seen.add(id(o))
                    queue.append(o)
    return False


def _reach(process: FreeProcess, X: SpaceTimePoint, bottom: float, target: SpaceTimePoint | None,
           max_cylinders: int) -> tuple[bool | None, list[Cylinder]]:
    """Breadth-first search of everything reachable from ``X`` above ``bottom``.

    Returns (hit, reached).  ``hit`` is None when the budget ran out first.
    Cylinders are returned unclipped; lives are cut at ``bottom`` and at
    ``X.t`` by the callers.
    """
    env = process.env
    start = [c for a in env.animals_containing(X.x) for c in process.alive_at(a, X.t)]
    reached = list(start)
    seen = set(id(c) for c in start)
    queue = deque(start)
    while queue:
        c = queue.popleft()
        if target is not None and target.x in c.basis.sites and \
                max(c.birth, bottom) <= target.t <= min(c.death, X.t):
            return True, reached
        if c.birth <= bottom:
            continue
        for theta in env.incompatible_animals(c.basis):
            for o in process.alive_at(theta, c.birth):
                if o is not c and id(o) not in seen:
                    seen.add(id(o))
                    reached.append(o)
                    queue.append(o)
        if len(reached) > max_cylinders:
            return None, reached
    return (False if target is not None else None), reached


def _box_process(env: Environment, X: SpaceTimePoint, box_: Box | None, seed: int, replica: int,
                 dominating_rate=None) -> tuple[FreeProcess, float]:
    if box_ is None:
        return FreeProcess(env, seed, replica, top=X.t, dominating_rate=dominating_rate), -math.inf
    sites = frozenset(box_.sites)
    if not sites <= env.region:
        raise RegionError("box exceeds the environment window; enlarge the window or shrink L")
    sub = env.restricted(sites)
    return FreeProcess(sub, seed, replica, top=X.t, dominating_rate=dominating_rate), box_.t_low


def _connect_one(replica, env, X, Y, box_, seed, max_cylinders):
    process, bottom = _box_process(env, X, box_, seed, replica)
    hit, _ = _reach(process, X, bottom, Y, max_cylinders)
    return hit


def estimate_G(env: Environment, X, Y, box: Box | None = None, replicas: int = 1000, seed: int = 0,
               workers: int = 1, max_cylinders: int = 1_000_000, confidence: float = 0.95) -> Estimate:
    """Fraction of free-process replicas in which ``X`` connects to ``Y``.

    With ``box`` the configuration is first restricted to the box.  Runs
    that exhaust ``max_cylinders`` are excluded and counted in ``extra``.
    """
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    X, Y = as_point(X), as_point(Y)
    _check_order(X, Y)
    if box is not None and not (box.contains(X) and box.contains(Y)):
        raise ValueError("both points must lie in the box")
    hits = map_replicas(_connect_one, replicas, env, X, Y, box, seed, max_cylinders, workers=workers)
    done = [h for h in hits if h is not None]
    if not done:
        raise RuntimeError("every replica exceeded the cylinder budget")
    est = proportion(sum(done), len(done), confidence)
    est.extra["budget_exceeded"] = len(hits) - len(done)
    return est


def _interval_measure(intervals: list[tuple[float, float]]) -> float:
    total, end = 0.0, -math.inf
    for a, b in sorted(intervals):
        if b <= end:
            continue
        total += b - max(a, end)
        end = b
    return total


def boundary_value(reached: Iterable[Cylinder], box_: Box) -> float:
    """Horizontal-face count plus vertical-shell time measure for one replica."""
    bottom, top = box_.t_low, box_.t_high
    face: set[Site] = set()
    shell_set = set(box_.shell_sites)
    spans: dict[Site, list] = {}
    for c in reached:
        b, e = max(c.birth, bottom), min(c.death, top)
        if e < b:
            continue
        if c.birth <= bottom:
            face.update(c.basis.support)
        for z in c.basis.support:
            if z in shell_set:
                spans.setdefault(z, []).append((b, e))
    return float(len(face)) + math.fsum(_interval_measure(v) for v in spans.values())


def _boundary_one(replica, env, X, box_, seed, max_cylinders):
    process, bottom = _box_process(env, X, box_, seed, replica)
    hit, reached = _reach(process, X, bottom, None, max_cylinders)
    if len(reached) > max_cylinders:
        return None
    return boundary_value(reached, box_)


def boundary_sum(env: Environment, x: Sequence[int], L: float, T: float, replicas: int = 1000,
                 seed: int = 0, t: float = 0.0, delta: float | None = None, workers: int = 1,
                 max_cylinders: int = 1_000_000, confidence: float = 0.95) -> Estimate:
    """Estimate of the summed in-box connectivity from ``(x, t)`` to the box boundary.

    Each replica contributes the number of bottom-face sites reached plus,
    for every shell site, the exact length of time it is covered by a
    reached cylinder.  The time integral is therefore computed without
    discretization.
    """
    if replicas < 2:
        raise ValueError("need at least two replicas")
    if delta is None:
        delta = env.model.geometry().delta
    X = SpaceTimePoint(x, t)
    box_ = Box(X, float(L), float(T), float(delta))
    sites = frozenset(box_.sites)
    if not sites <= env.region:
        raise RegionError(f"Λ[x; L+δ] with L+δ={L + delta} exceeds the environment window")
    meta = {"vertical_integral": "exact union-of-intervals measure per replica",
            "box_sites": len(sites), "shell_sites": len(box_.shell_sites), "T": T, "delta": delta}
    if env.restricted(sites).total_rate() == 0.0:
        return Estimate(0.0, 0.0, 0.0, replicas, confidence, "exact", {"stderr": 0.0, **meta})
    vals = map_replicas(_boundary_one, replicas, env, X, box_, seed, max_cylinders, workers=workers)
    done = [v for v in vals if v is not None]
    est = mean_estimate(done, confidence)
    if est.value == 0.0 and est.ci_high == 0.0:
        # all replicas empty: bound the mean by P(nonzero) times the largest possible value
        cap = len(sites) + len(box_.shell_sites) * T
        p_hi = 1.0 - ((1.0 - confidence) / 2) ** (1.0 / len(done))
        est = Estimate(0.0, 0.0, p_hi * cap, len(done), confidence, "zero-count bound", {"stderr": 0.0})
    est.extra.update(meta)
    est.extra["budget_exceeded"] = len(vals) - len(done)
    return est


@dataclass(frozen=True)
class RegularityVerdict:
    site: Site
    m: float
    L: float
    T: float
    delta: float
    estimate: Estimate
    threshold: float
    verdict: str

    @property
    def regular(self) -> bool:
        return self.verdict == "regular"


def regularity_threshold(m: float, L: float, delta: float) -> float:
    return math.exp(-m * (L + delta))


def is_regular(env: Environment, x: Sequence[int], m: float, L: float,
               T_fn: Callable[[float], float] | float, replicas: int = 1000, confidence: float = 0.95,
               seed: int = 0, delta: float | None = None, workers: int = 1) -> RegularityVerdict:
    """Classify ``x`` as regular, singular or inconclusive at scale ``L``."""
    if not m > 0:
        raise ValueError("m must be positive")
    if not L > 1:
        raise ValueError("L must exceed 1")
    if delta is None:
        delta = env.model.geometry().delta
    T = float(T_fn(L)) if callable(T_fn) else float(T_fn)
    if not math.isfinite(T):
        raise OverflowError("box height is not finite at this scale; work in log space instead")
    est = boundary_sum(env, x, L, T, replicas, seed, 0.0, delta, workers, confidence=confidence)
    thr = regularity_threshold(m, L, delta)
    if est.ci_high <= thr:
        verdict = "regular"
    elif est.ci_low > thr:
        verdict = "singular"
    else:
        verdict = "inconclusive"
    return RegularityVerdict(tuple(x), m, L, T, delta, est, thr, verdict)


def regular_path_bound(x, y, t_X: float, t_Y: float, L: float, T: float, delta: float, m: float,
                       dist_to_complement: float) -> float:
    """Decay bound exp(-m (L+δ) N) for connections inside a regular region."""
    if not (m > 0 and L > 0 and T > 0):
        raise ValueError("m, L and T must be positive")
    s = L + delta
    ratio = min(dist_to_complement / s, max(sup_dist(x, y) / s, abs(t_X - t_Y) / T))
    n = math.floor(ratio * (1 + 1e-12))
    return math.exp(-m * s * n)


# disjoint occurrence -------------------------------------------------------

def _ancestor_graph(config: CylinderConfiguration):
    cyl = list(config.cylinders)
    by_animal: dict = {}
    for i, c in enumerate(cyl):
        by_animal.setdefault(c.basis, []).append(i)
    edges = []
    for i, c in enumerate(cyl):
        for theta in config.env.incompatible_animals(c.basis):
            for j in by_animal.get(theta, ()):
                o = cyl[j]
                if o.birth < c.birth <= o.death:
                    edges.append((i, j))
    return cyl, edges


def disjoint_paths(config: CylinderConfiguration, sources: Sequence, targets: Sequence) -> int:
    """Largest number of cylinder-disjoint open paths from a source point to a target point.

    Computed as a unit-capacity vertex max-flow on the ancestor graph.
    """
    sources = [as_point(p) for p in sources]
    targets = [as_point(p) for p in targets]
    cyl, edges = _ancestor_graph(config)
    n = len(cyl)
    if n == 0:
        return 0
    # node i -> in 2i, out 2i+1; source 2n, sink 2n+1
    S, K = 2 * n, 2 * n + 1
    rows, cols, caps = [], [], []
    for i in range(n):
        rows.append(2 * i); cols.append(2 * i + 1); caps.append(1)
    for i, j in edges:
        rows.append(2 * i + 1); cols.append(2 * j); caps.append(1)
    for i, c in enumerate(cyl):
        if any(p.x in c.basis.sites and c.birth <= p.t <= c.death for p in sources):
            rows.append(S); cols.append(2 * i); caps.append(1)
        if any(p.x in c.basis.sites and c.birth <= p.t <= c.death for p in targets):
            rows.append(2 * i + 1); cols.append(K); caps.append(1)
    g = csr_matrix((np.array(caps, dtype=np.int32), (rows, cols)), shape=(2 * n + 2, 2 * n + 2))
    g.sum_duplicates()
    return int(maximum_flow(g, S, K).flow_value)


__all__ = [
    "ArgumentOrderError", "Box", "RegularityVerdict", "SpaceTimePoint", "boundary_sum", "boundary_value",
    "connected", "disjoint_paths", "estimate_G", "is_regular", "regular_path_bound", "regularity_threshold",
]
