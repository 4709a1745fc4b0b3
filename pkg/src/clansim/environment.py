"""Quenched disorder: sampling birth-rate environments and their diagnostics."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from ._parallel import map_replicas
from ._rng import check_seed, substream
from .animals import Animal, AnimalModel
from .lattice import Site, box, dilate, nearest_neighbour_links
from .models import make_model, random_cluster_weights
from .stats import Estimate, mean_estimate, proportion

SNAPSHOT_VERSION = 1

_DISTRIBUTIONS = {
    "uniform": ("low", "high"),
    "exponential": ("scale",),
    "lognormal": ("mean", "sigma"),
    "bernoulli_mixture": ("p", "low", "high"),
    "degenerate": ("value",),
}

_COMBINE = ("mean", "sum", "product", "max", "min", "germ", "random_cluster")


class RegionError(ValueError):
    """A requested region is not covered by the environment window."""


def _check_marginal(m: Mapping, where: str) -> dict:
    if not isinstance(m, Mapping) or "name" not in m:
        raise ValueError(f"{where}: a marginal needs a 'name'")
    name = m["name"]
    if name not in _DISTRIBUTIONS:
        raise ValueError(f"{where}: unknown distribution {name!r}")
    params = {k: v for k, v in m.items() if k != "name"}
    needed = _DISTRIBUTIONS[name]
    extra = set(params) - set(needed)
    missing = [k for k in needed if k not in params and not (name == "exponential" and k == "scale")]
    if extra or missing:
        raise ValueError(f"{where}: {name} takes parameters {needed}")
    p = {k: float(v) for k, v in params.items()}
    if name == "uniform" and not p["low"] <= p["high"]:
        raise ValueError(f"{where}: uniform needs low <= high")
    if name == "exponential" and p.setdefault("scale", 1.0) <= 0:
        raise ValueError(f"{where}: exponential scale must be positive")
    if name == "lognormal" and p["sigma"] < 0:
        raise ValueError(f"{where}: lognormal sigma must be >= 0")
    if name == "bernoulli_mixture" and not 0.0 <= p["p"] <= 1.0:
        raise ValueError(f"{where}: mixture weight p must lie in [0, 1]")
    return {"name": name, **p}


def _draw(rng: np.random.Generator, m: Mapping, n: int) -> np.ndarray:
    name = m["name"]
    if name == "uniform":
        return rng.uniform(m["low"], m["high"], n)
    if name == "exponential":
        return rng.exponential(m["scale"], n)
    if name == "lognormal":
        return rng.lognormal(m["mean"], m["sigma"], n)
    if name == "bernoulli_mixture":
        return np.where(rng.random(n) < m["p"], m["high"], m["low"])
    return np.full(n, m["value"])


@dataclass
class DisorderSpec:
    """How the local disorder variables are drawn and turned into rates.

    ``kind`` is ``"site"`` (one variable per site) or ``"site-link"`` (one
    per site and one per nearest-neighbour link).  ``rate_map`` holds
    ``combine`` (how the variables of an animal are merged), an overall
    ``scale`` and optional per-kind ``kind_weights``.
    """

    kind: str = "site"
    marginal: dict = field(default_factory=lambda: {"name": "degenerate", "value": 1.0})
    link_marginal: dict | None = None
    rate_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("site", "site-link"):
            raise ValueError(f"unknown disorder kind {self.kind!r}")
        self.marginal = _check_marginal(self.marginal, "marginal")
        if self.kind == "site-link":
            self.link_marginal = _check_marginal(self.link_marginal or self.marginal, "link_marginal")
        elif self.link_marginal is not None:
            raise ValueError("link_marginal only applies to site-link disorder")
        rm = dict(self.rate_map)
        combine = rm.setdefault("combine", "mean")
        if combine not in _COMBINE:
            raise ValueError(f"unknown rate combination {combine!r}")
        if combine == "random_cluster" and self.kind != "site-link":
            raise ValueError("random_cluster rates need site-link disorder")
        rm["scale"] = float(rm.get("scale", 1.0))
        if not rm["scale"] >= 0:
            raise ValueError("rate scale must be nonnegative")
        if rm.get("kind_weights") is not None:
            rm["kind_weights"] = [float(v) for v in rm["kind_weights"]]
            if any(v < 0 for v in rm["kind_weights"]):
                raise ValueError("kind weights must be nonnegative")
        unknown = set(rm) - {"combine", "scale", "kind_weights"}
        if unknown:
            raise ValueError(f"unknown rate_map keys {sorted(unknown)}")
        self.rate_map = rm

    @classmethod
    def degenerate(cls, value: float = 1.0, **rate_map) -> "DisorderSpec":
        return cls("site", {"name": "degenerate", "value": value}, None, rate_map)

    @classmethod
    def from_dict(cls, data: Mapping) -> "DisorderSpec":
        return cls(data.get("kind", "site"), data.get("marginal", {"name": "degenerate", "value": 1.0}),
                   data.get("link_marginal"), data.get("rate_map", {}))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "marginal": dict(self.marginal), "rate_map": dict(self.rate_map)}
        if self.link_marginal is not None:
            out["link_marginal"] = dict(self.link_marginal)
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def rate_function(self, site_values: Mapping, link_values: Mapping) -> Callable[[Animal], float]:
        rm = self.rate_map
        combine, scale, weights = rm["combine"], rm["scale"], rm.get("kind_weights")
        if combine == "random_cluster":
            base = random_cluster_weights(site_values, link_values)
        else:
            use_links = self.kind == "site-link"

            def base(a: Animal) -> float:
                vals = [site_values[s] for s in a.support]
                if use_links:
                    vals += [link_values[l] for l in a.links]
                if combine == "mean":
                    return math.fsum(vals) / len(vals)
                if combine == "sum":
                    return math.fsum(vals)
                if combine == "product":
                    return math.prod(vals)
                if combine == "max":
                    return max(vals)
                if combine == "min":
                    return min(vals)
                return site_values[a.germ]

        def rate(a: Animal) -> float:
            w = scale * base(a)
            if weights is not None:
                w *= weights[a.kind] if a.kind < len(weights) else weights[-1]
            return w

        return rate


class Environment:
    """A realized environment: rates for every animal inside ``region``.

    ``core`` is the window the user asked for; ``region`` is the core
    dilated by the animal diameter, so every animal touching the core has
    its disorder variables drawn.  Rates are computed on first use and
    cached.
    """

    def __init__(self, model: AnimalModel, region: Iterable[Site], *, core: Iterable[Site] | None = None,
                 site_values: Mapping[Site, float] | None = None,
                 link_values: Mapping | None = None, spec: DisorderSpec | None = None,
                 seed: int | None = None, replica: int = 0,
                 rate_fn: Callable[[Animal], float] | None = None, _rates: dict | None = None):
        self.model = model
        self.region = frozenset(tuple(s) for s in region)
        if not self.region:
            raise ValueError("environment region is empty")
        self.core = frozenset(tuple(s) for s in core) if core is not None else self.region
        self.site_values = dict(site_values or {})
        self.link_values = dict(link_values or {})
        self.spec = spec
        self.seed = seed
        self.replica = replica
        if rate_fn is None:
            if spec is None:
                raise ValueError("need either a disorder spec or an explicit rate function")
            rate_fn = spec.rate_function(self.site_values, self.link_values)
        self._rate_fn = rate_fn
        self._rates = {} if _rates is None else _rates
        self._animals: list[Animal] | None = None
        self._index: dict[Animal, int] | None = None
        self._incompat: dict[Animal, tuple[Animal, ...]] = {}
        self._containing: dict[Site, tuple[Animal, ...]] = {}

    # construction helpers ---------------------------------------------------
    @classmethod
    def homogeneous(cls, model: AnimalModel, core: Iterable[Site], w: float,
                    kind_weights: list[float] | None = None) -> "Environment":
        """Deterministic environment with rate ``w`` (times a per-kind weight)."""
        spec = DisorderSpec.degenerate(w, **({"kind_weights": kind_weights} if kind_weights else {}))
        return sample_environment(model, spec, core, seed=0)

    @classmethod
    def from_rates(cls, model: AnimalModel, region: Iterable[Site],
                   rates: Mapping[Animal, float] | Callable[[Animal], float]) -> "Environment":
        fn = rates if callable(rates) else (lambda a, r=dict(rates): r.get(a, 0.0))
        return cls(model, region, rate_fn=fn)

    def restricted(self, region: Iterable[Site]) -> "Environment":
        """The same rates seen through a smaller window."""
        region = frozenset(tuple(s) for s in region)
        if not region <= self.region:
            missing = sorted(region - self.region)
            raise RegionError(f"{len(missing)} sites (e.g. {missing[0]}) lie outside the environment window")
        if region == self.region:
            return self
        env = Environment(self.model, region, core=region & self.core, site_values=self.site_values,
                          link_values=self.link_values, spec=self.spec, seed=self.seed,
                          replica=self.replica, rate_fn=self._rate_fn, _rates=self._rates)
        return env

    # rates and enumeration -----------------------------------------------------
    def rate(self, animal: Animal) -> float:
        w = self._rates.get(animal)
        if w is None:
            try:
                w = float(self._rate_fn(animal))
            except KeyError as exc:
                raise RegionError(f"{animal!r} needs disorder outside the window") from exc
            if not w >= 0 or math.isnan(w):
                raise ValueError(f"rate of {animal!r} is {w}; rates must be nonnegative")
            self._rates[animal] = w
        return w

    def animals(self) -> list[Animal]:
        """All animals with support inside the window, in a fixed order."""
        if self._animals is None:
            self._animals = self.model.animals_in(self.region)
        return list(self._animals)

    def animal_id(self, animal: Animal) -> int:
        """Dense integer id of an animal within this window."""
        if self._index is None:
            self._index = {a: i for i, a in enumerate(self.animals())}
        return self._index[animal]

    def animals_containing(self, x: Site) -> tuple[Animal, ...]:
        hit = self._containing.get(x)
        if hit is None:
            region = self.region
            if x in region:
                hit = tuple(a for a in self.model.animals_containing(x) if a.sites <= region)
            else:
                hit = ()
            self._containing[x] = hit
        return hit

    def animals_in(self, region: Iterable[Site]) -> list[Animal]:
        region = frozenset(region)
        return [a for a in self.animals() if a.sites <= region]

    def incompatible_animals(self, animal: Animal) -> tuple[Animal, ...]:
        """Animals inside the window that are incompatible with ``animal`` (itself included if so)."""
        hit = self._incompat.get(animal)
        if hit is None:
            model = self.model
            seen = {}
            for s in sorted(model.halo(animal)):
                for b in self.animals_containing(s):
                    if b not in seen and model._incompatible(animal, b):
                        seen[b] = None
            hit = tuple(sorted(seen))
            self._incompat[animal] = hit
        return hit

    def total_rate(self, region: Iterable[Site] | None = None) -> float:
        animals = self.animals() if region is None else self.animals_in(region)
        return math.fsum(self.rate(a) for a in animals)

    # serialization ---------------------------------------------------------
    def to_json(self) -> str:
        data = {
            "version": SNAPSHOT_VERSION,
            "model": self.model.to_config(),
            "spec": self.spec.to_dict() if self.spec else None,
            "spec_hash": self.spec.digest() if self.spec else None,
            "seed": self.seed,
            "replica": self.replica,
            "core": sorted(map(list, self.core)),
            "region": sorted(map(list, self.region)),
        }
        if self.spec is not None:
            data["sites"] = [[list(s), self.site_values[s]] for s in sorted(self.site_values)]
            data["links"] = [[list(a), list(b), self.link_values[(a, b)]] for a, b in sorted(self.link_values)]
        else:
            data["rates"] = [[a.kind, [list(s) for s in a.support], [[list(x), list(y)] for x, y in a.links],
                              self.rate(a)] for a in self.animals()]
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, model: AnimalModel | None = None) -> "Environment":
        data = json.loads(text)
        if data.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {data.get('version')}")
        model = model or make_model(data["model"])
        region = [tuple(s) for s in data["region"]]
        core = [tuple(s) for s in data["core"]]
        if data.get("spec") is not None:
            spec = DisorderSpec.from_dict(data["spec"])
            sites = {tuple(s): float(v) for s, v in data["sites"]}
            links = {(tuple(a), tuple(b)): float(v) for a, b, v in data["links"]}
            return cls(model, region, core=core, site_values=sites, link_values=links, spec=spec,
                       seed=data["seed"], replica=data.get("replica", 0))
        rates = {}
        for kind, support, links, w in data["rates"]:
            a = Animal([tuple(s) for s in support], kind, [(tuple(x), tuple(y)) for x, y in links], model.tag)
            rates[a] = float(w)
        env = cls.from_rates(model, region, rates)
        env.core = frozenset(core)
        return env

    def __repr__(self) -> str:
        return f"Environment({self.model.name}, {len(self.region)} sites, seed={self.seed})"


def sample_environment(model: AnimalModel, spec: DisorderSpec, region: Iterable[Site],
                       seed: int = 0, replica: int = 0) -> Environment:
    """Draw independent disorder variables on ``region`` dilated by the animal diameter."""
    seed = check_seed(seed)
    core = frozenset(tuple(int(v) for v in s) for s in region)
    if not core:
        raise ValueError("region is empty")
    domain = dilate(core, int(math.ceil(model.ell1)))
    sites = sorted(domain)
    rng = substream(seed, "environment", replica)
    values = _draw(rng, spec.marginal, len(sites))
    site_values = dict(zip(sites, values.tolist()))
    link_values = {}
    if spec.kind == "site-link":
        links = nearest_neighbour_links(domain)
        lv = _draw(rng, spec.link_marginal, len(links))
        link_values = dict(zip(links, lv.tolist()))
    env = Environment(model, domain, core=core, site_values=site_values, link_values=link_values,
                      spec=spec, seed=seed, replica=replica)
    total = env.total_rate()
    if not math.isfinite(total):
        raise OverflowError("the total rate over the window is not finite")
    return env


# diagnostics ---------------------------------------------------------------

def _sites(env: Environment, region) -> list[Site]:
    sites = sorted(env.region if region is None else frozenset(tuple(s) for s in region))
    if not sites:
        raise ValueError("empty region")
    return sites


def upsilon(env: Environment, region=None) -> float:
    """Largest total rate of animals through a single site."""
    return max(math.fsum(env.rate(a) for a in env.animals_containing(x)) for x in _sites(env, region))


def psi(env: Environment, size_fn: Callable[[Animal], float] | None = None, region=None) -> float:
    """Largest size-weighted rate of animals incompatible with one animal."""
    size = size_fn or env.model.size
    sites = frozenset(_sites(env, region))
    best = 0.0
    for g in env.animals():
        if not g.sites <= sites:
            continue
        total = math.fsum(size(t) * env.rate(t) for t in env.incompatible_animals(g))
        best = max(best, total / size(g))
    return best


def xi(env: Environment, region=None) -> float:
    """Largest halo-weighted rate through a single site."""
    model = env.model
    return max(math.fsum(len(model.halo(a)) * env.rate(a) for a in env.animals_containing(x))
               for x in _sites(env, region))


def halo_ratios(env: Environment, size_fn: Callable[[Animal], float] | None = None,
                region=None) -> tuple[float, float]:
    """(u1, u2): smallest and largest |halo| / size over animals in the window."""
    size = size_fn or env.model.size
    sites = frozenset(_sites(env, region))
    ratios = [len(env.model.halo(a)) / size(a) for a in env.animals() if a.sites <= sites]
    if not ratios:
        raise ValueError("no animal fits in the region")
    return min(ratios), max(ratios)


@dataclass(frozen=True)
class DisorderDiagnostics:
    upsilon: float
    psi: float
    xi: float
    u1: float
    u2: float
    aleph_a: float | None = None

    def as_row(self) -> list[float]:
        return [self.upsilon, self.psi, self.xi, self.u1, self.u2]


def diagnostics(env: Environment, size_fn=None, region=None, a: float | None = None) -> DisorderDiagnostics:
    u1, u2 = halo_ratios(env, size_fn, region)
    ups = upsilon(env, region)
    return DisorderDiagnostics(ups, psi(env, size_fn, region), xi(env, region), u1, u2,
                               None if a is None else math.log1p(ups) ** a)


def a_threshold(d: int) -> float:
    """Smallest admissible log-moment exponent in dimension d."""
    return 2 * d * d * (1 + math.sqrt(1 + 1 / d) + 1 / (2 * d))


def _replica_diag(replica, model, spec, region, seed, size_fn):
    env = sample_environment(model, spec, region, seed, replica)
    return diagnostics(env, size_fn)


def sample_diagnostics(model: AnimalModel, spec: DisorderSpec, region, replicas: int, seed: int = 0,
                       size_fn=None, workers: int = 1) -> list[DisorderDiagnostics]:
    """Diagnostics of ``replicas`` fresh environments, in replica order."""
    return map_replicas(_replica_diag, replicas, model, spec, list(region), seed, size_fn, workers=workers)


def aleph_estimate(model: AnimalModel, spec: DisorderSpec, a: float, region, replicas: int,
                   seed: int = 0, workers: int = 1, confidence: float = 0.95) -> Estimate:
    """Monte Carlo mean of ln^a(1 + Υ) over fresh environments."""
    if not a > 0:
        raise ValueError("exponent a must be positive")
    if replicas < 2:
        raise ValueError("need at least two replicas")
    diags = sample_diagnostics(model, spec, region, replicas, seed, workers=workers)
    vals = [math.log1p(dg.upsilon) ** a for dg in diags]
    est = mean_estimate(vals, confidence)
    if not all(math.isfinite(v) for v in vals):
        est.extra["flag"] = "non-finite sample"
    return est


def check_hypotheses(model: AnimalModel, spec: DisorderSpec, epsilon: float, region, replicas: int,
                     seed: int = 0, a: float | None = None, size_fn=None, workers: int = 1,
                     confidence: float = 0.95) -> dict:
    """Monte Carlo report on the disorder conditions of the ergodicity theorem.

    Values are computed on the finite window, so suprema are lower bounds
    for their infinite-volume counterparts.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d = model.d
    thr = a_threshold(d)
    a = 1.01 * thr if a is None else float(a)
    region = list(region)
    diags = sample_diagnostics(model, spec, region, replicas, seed, size_fn, workers)
    aleph = mean_estimate([math.log1p(dg.upsilon) ** a for dg in diags], confidence)
    psi_e = mean_estimate([dg.psi for dg in diags], confidence)
    xi_e = mean_estimate([dg.xi for dg in diags], confidence)
    u1 = min(dg.u1 for dg in diags)
    u2 = max(dg.u2 for dg in diags)
    corollary_bound = epsilon * u1 / u2 if u2 > 0 else math.inf
    return {
        "d": d,
        "window_sites": len(region),
        "window_note": "suprema restricted to the finite window (lower bounds for the infinite-volume values)",
        "a_threshold": thr,
        "a": a,
        "epsilon": epsilon,
        "replicas": replicas,
        "conditions": {
            "log_moment": {"pass": a > thr and math.isfinite(aleph.value),
                           "estimate": aleph.value, "ci": [aleph.ci_low, aleph.ci_high]},
            "psi_mean": {"pass": psi_e.ci_high < epsilon, "estimate": psi_e.value,
                         "ci": [psi_e.ci_low, psi_e.ci_high]},
            "halo_route": {"pass": u1 > 0 and math.isfinite(u2) and xi_e.ci_high <= corollary_bound,
                           "estimate": xi_e.value, "ci": [xi_e.ci_low, xi_e.ci_high],
                           "u1": u1, "u2": u2, "bound": corollary_bound},
        },
    }


def psi_exceedance(model: AnimalModel, spec: DisorderSpec, rho: float, region, replicas: int,
                   seed: int = 0, workers: int = 1, confidence: float = 0.95) -> Estimate:
    """Fraction of fresh environments with Ψ > rho."""
    diags = sample_diagnostics(model, spec, region, replicas, seed, workers=workers)
    return proportion(sum(dg.psi > rho for dg in diags), replicas, confidence)


__all__ = [
    "DisorderDiagnostics", "DisorderSpec", "Environment", "RegionError", "a_threshold",
    "aleph_estimate", "check_hypotheses", "diagnostics", "halo_ratios", "psi", "psi_exceedance",
    "sample_diagnostics", "sample_environment", "upsilon", "xi", "box",
]
