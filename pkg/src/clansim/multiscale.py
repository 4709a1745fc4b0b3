"""Parameters, scales, good events and empirical checks of the multiscale analysis."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import mpmath

from ._parallel import map_replicas
from ._rng import check_seed
from .animals import AnimalModel
from .connectivity import RegularityVerdict, is_regular
from .environment import DisorderSpec, Environment, a_threshold, psi, sample_environment
from .free_process import FreeProcess
from .lattice import Site, box, sup_dist
from .stats import Estimate, proportion


class ScaleTooLargeError(ValueError):
    """Simulation was requested at a scale whose box height is astronomically large."""


def optimal_alpha(d: int) -> float:
    return d + math.sqrt(d * d + d)


def _c(alpha: float, d: int) -> float:
    return alpha - d + alpha * d


@dataclass(frozen=True)
class MultiscaleParameters:
    d: int
    alpha: float
    a: float
    nu: float
    p: float
    kappa: float
    b: float
    eta: float
    tau: float
    theta: float
    theta0: float
    m0: float
    m_inf: float
    q: float
    q0: float
    R: int
    L0: float | None = None
    Delta: float | None = None

    def delta_at(self, l: float) -> float:
        """Strip width exp(-l^eta) at scale l."""
        return math.exp(-(l ** self.eta))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InfeasibleReport:
    d: int
    a: float
    violated: str
    detail: str

    feasible = False

    def to_dict(self) -> dict:
        return {"feasible": False, **asdict(self)}


def _mid(lo: float, hi: float) -> float:
    return lo + (hi - lo) / 2


def singular_ball_count(alpha: float, p: float, d: int) -> int:
    """Smallest integer strictly above alpha p / (p - alpha d)."""
    x = alpha * p / (p - alpha * d)
    return int(math.floor(x)) + 1


def feasible_parameters(d: int, a: float | None = None, m0: float = 1.0, m_inf: float = 0.5,
                        L0: float | None = None) -> MultiscaleParameters | InfeasibleReport:
    """Pick a parameter tuple satisfying the whole constraint chain.

    Each parameter is set to the midpoint of the interval left open by the
    ones fixed before it; κ and b split the remaining slack in thirds.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    alpha = optimal_alpha(d)
    thr = a_threshold(d)
    a = 1.01 * thr if a is None else float(a)
    if not a > thr:
        return InfeasibleReport(d, a, "a > 2d^2(1 + sqrt(1 + 1/d) + 1/(2d))",
                                f"a = {a} does not exceed the threshold {thr:.6f}")
    if not 0 < m_inf < m0:
        return InfeasibleReport(d, a, "0 < m_inf < m0", f"m0={m0}, m_inf={m_inf}")
    c = _c(alpha, d)
    nu_lo = alpha * d * (alpha + a + 1) / (a * c)
    if not nu_lo < 1:
        return InfeasibleReport(d, a, "nu_lo < 1", f"lower bound for nu is {nu_lo}")
    nu = _mid(nu_lo, 1.0)
    p_lo = alpha * d
    p_hi = (a * (nu * c - alpha * d) - alpha * d) / alpha
    if not p_lo < p_hi:
        return InfeasibleReport(d, a, "alpha d < p < p_hi", f"empty interval ({p_lo}, {p_hi})")
    p = _mid(p_lo, p_hi)
    theta0 = min(alpha - 1, alpha * (1 - nu))
    kappa_lo = max(1.0, nu + theta0)
    eta_lo = alpha * (p + d) / a
    eta_hi = alpha * nu - kappa_lo * d
    if not 0 <= eta_lo < eta_hi:
        return InfeasibleReport(d, a, "alpha(p+d)/a < eta < b - kappa d", f"empty interval ({eta_lo}, {eta_hi})")
    eta = _mid(eta_lo, eta_hi)
    slack = alpha * nu - kappa_lo * d - eta
    kappa = kappa_lo + slack / (3 * d)
    b = kappa * d + eta + slack / 3
    tau = _mid(nu, min(kappa - theta0, alpha * nu))
    theta = theta0 / 2
    q = 1 / nu
    q0 = a * c / (alpha * d * (alpha + a + 1))
    R = singular_ball_count(alpha, p, d)
    Delta = math.exp(-(L0 ** eta)) if L0 is not None else None
    return MultiscaleParameters(d, alpha, a, nu, p, kappa, b, eta, tau, theta, theta0, m0, m_inf,
                                q, q0, R, L0, Delta)


def verify_parameters(P: MultiscaleParameters, rel: float = 1e-12) -> list[str]:
    """Recheck every inequality of the chain from the stored fields; return the violated ones."""
    bad = []
    d, al = P.d, P.alpha

    def need(ok: bool, what: str):
        if not ok:
            bad.append(what)

    need(al > 1 and al > d, "alpha > max(1, d)")
    need(P.a > 2 * d * d * (1 + (1 + 1 / d) ** 0.5 + 1 / (2 * d)), "a above threshold")
    need(0 < P.nu < 1, "0 < nu < 1")
    need(P.nu > al * d * (al + P.a + 1) / (P.a * (al - d + al * d)), "nu above its lower bound")
    need(P.nu > al * d / (al - d + al * d), "nu > alpha d / (alpha - d + alpha d)")
    need(P.p > al * d, "p > alpha d")
    need(P.p < (P.a * (P.nu * (al - d + al * d) - al * d) - al * d) / al, "p below its upper bound")
    th0 = min(al - 1, al * (1 - P.nu))
    need(abs(P.theta0 - th0) <= rel * max(1.0, th0), "theta0 = min(alpha-1, alpha(1-nu))")
    need(max(1.0, P.nu + th0) < P.kappa, "kappa > max(1, nu + theta0)")
    need(P.kappa < P.b / d, "kappa < b/d")
    need(P.b / d < al * P.nu / d, "b/d < alpha nu / d")
    need(0 < P.eta < P.b - P.kappa * d, "0 < eta < b - kappa d")
    need(P.a > al * (P.p + d) / P.eta, "a > alpha (p+d) / eta")
    need(P.nu < P.tau < min(P.kappa - th0, al * P.nu), "nu < tau < min(kappa - theta0, alpha nu)")
    need(0 < P.theta < th0, "0 < theta < theta0")
    need(0 < P.m_inf < P.m0, "0 < m_inf < m0")
    need(abs(P.q * P.nu - 1) <= rel, "q nu = 1")
    q0 = P.a * (al - d + al * d) / (al * d * (al + P.a + 1))
    need(abs(P.q0 - q0) <= rel * q0, "q0 formula")
    need(1 < P.q < P.q0, "1 < q < q0")
    R = al * P.p / (P.p - al * d)
    need(P.R > R and P.R - 1 <= R, "R smallest integer above alpha p / (p - alpha d)")
    return bad


class ScaledSequence:
    """Scales L_{k+1} = L_k^α with heights T(L) = exp(L^ν), in extended precision.

    Heights are held as their natural logarithms; ``T(k)`` returns a float
    only while it is representable.
    """

    def __init__(self, L0: float, alpha: float, nu: float, dps: int = 60):
        if not L0 > 1:
            raise ValueError("L0 must exceed 1")
        self.ctx = mpmath.mp.clone()
        self.ctx.dps = dps
        self.L0 = self.ctx.mpf(L0)
        self.alpha = self.ctx.mpf(alpha)
        self.nu = self.ctx.mpf(nu)
        self._scales = [self.L0]

    def scale(self, k: int):
        while len(self._scales) <= k:
            self._scales.append(self._scales[-1] ** self.alpha)
        return self._scales[k]

    def log_height(self, k: int):
        return self.scale(k) ** self.nu

    def log10_height(self, k: int) -> float:
        return float(self.log_height(k) / self.ctx.log(10))

    def height(self, k: int) -> float:
        lh = self.log_height(k)
        return math.exp(float(lh)) if lh < 700 else math.inf

    def T_fn(self) -> Callable[[float], float]:
        nu = float(self.nu)
        return lambda L: math.exp(L ** nu)

    def log_ratio_to_power(self, k: int, n: float):
        """log(T(L_k) / L_k^n)."""
        return self.log_height(k) - n * self.ctx.log(self.scale(k))

    def rows(self, n_scales: int) -> list[dict]:
        return [{"k": k, "L_k": float(self.scale(k)) if self.scale(k) < 1e300 else math.inf,
                 "log10_L_k": float(self.ctx.log10(self.scale(k))),
                 "log10_T": self.log10_height(k)} for k in range(n_scales)]


def k_delta(w: float, delta: float) -> float:
    """Probability that a thin time strip of width Δ is free of the animal (single-copy reading)."""
    if w < 0:
        raise ValueError("w must be nonnegative")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return math.exp(-(1 + delta) * w) + (-math.expm1(-w)) * (-math.expm1(-delta)) * math.exp(-delta * w)


def strip_event(process: FreeProcess, animal, s: float, delta: float, reading: str = "tagged") -> bool:
    """Whether the strip [s-Δ, s] is cleared for ``animal`` in one realization.

    The cleared event is: no birth in the strip, and either no copy alive at
    s-Δ or the copy alive there dies before s.  With ``reading="tagged"`` only
    the youngest copy alive at s-Δ has to die; with ``"all"`` every copy does.
    """
    start = s - delta
    alive = process.alive_at(animal, start)
    births = [c for c in process.covering(animal, start) if start < c.birth <= s]
    if births:
        return False
    if not alive:
        return True
    if reading == "tagged":
        youngest = max(alive, key=lambda c: c.birth)
        return youngest.death < s
    if reading == "all":
        return all(c.death < s for c in alive)
    raise ValueError(f"unknown reading {reading!r}")


def _strip_one(replica, env, animal, delta, seed, reading):
    proc = FreeProcess(env, seed, replica, top=0.0, tag="strip")
    return strip_event(proc, animal, 0.0, delta, reading)


def strip_probability(w: float, delta: float, replicas: int, seed: int = 0, reading: str = "tagged",
                      workers: int = 1) -> Estimate:
    """Monte Carlo frequency of the cleared-strip event for a single animal of rate ``w``."""
    from .models import HardCoreModel

    model = HardCoreModel.single_site(1)
    env = Environment.homogeneous(model, [(0,)], w)
    animal = env.animals()[0]
    hits = map_replicas(_strip_one, replicas, env, animal, delta, seed, reading, workers=workers)
    return proportion(sum(hits), replicas)


def event_B_check(env: Environment, tilde_lambda: Iterable[Site], delta: float, l: float,
                  b: float) -> tuple[bool, float]:
    """Whether Π K_Δ over animals in ``tilde_lambda`` is at least exp(-l^b).

    Returns the verdict and the log-margin l^b - Σ ln(1/K_Δ).
    """
    region = frozenset(tuple(s) for s in tilde_lambda)
    total = math.fsum(-math.log(k_delta(env.rate(g), delta)) for g in env.animals_in(region))
    margin = l ** b - total
    return margin >= 0, margin


def _fits_one_ball(points: Sequence[Site], radius: float) -> bool:
    d = len(points[0])
    return all(max(p[i] for p in points) - min(p[i] for p in points) <= 2 * radius for i in range(d))


def _ball_center(points: Sequence[Site]) -> Site:
    d = len(points[0])
    return tuple((max(p[i] for p in points) + min(p[i] for p in points)) // 2 for i in range(d))


def _greedy_cover(points: list[Site], radius: float) -> list[Site]:
    left = set(points)
    centers = []
    while left:
        best, best_cov = None, set()
        for c in sorted(left):
            cov = {p for p in left if sup_dist(p, c) <= radius}
            if len(cov) > len(best_cov):
                best, best_cov = c, cov
        centers.append(best)
        left -= best_cov
    return centers


def _exact_cover(points: list[Site], radius: float, R: int) -> list[Site] | None:
    groups: list[list[Site]] = []

    def place(i: int) -> bool:
        if i == len(points):
            return True
        p = points[i]
        for g in groups:
            g.append(p)
            if _fits_one_ball(g, radius) and place(i + 1):
                return True
            g.pop()
        if len(groups) < R:
            groups.append([p])
            if place(i + 1):
                return True
            groups.pop()
        return False

    if place(0):
        return [_ball_center(g) for g in groups]
    return None


def event_A_check(verdicts: Sequence[RegularityVerdict], R: int, l: float | None = None,
                  delta: float | None = None) -> tuple[bool, list[Site]]:
    """Whether the non-regular sites fit in R balls of radius 2(l+δ)+1.

    Inconclusive verdicts count as singular.  A greedy cover is tried
    first; when it needs more than R balls and there are at most R+3
    singular sites an exact search decides.
    """
    singular = sorted(v.site for v in verdicts if v.verdict != "regular")
    if not singular:
        return True, []
    if l is None:
        l = verdicts[0].L
    if delta is None:
        delta = verdicts[0].delta
    radius = 2 * (l + delta) + 1
    centers = _greedy_cover(singular, radius)
    if len(centers) <= R:
        return True, centers
    if len(singular) <= R + 3:
        exact = _exact_cover(singular, radius, R)
        if exact is not None:
            return True, exact
    return False, centers


def buffer_region(centers: Sequence[Site], x: Site, l: float, kappa: float, L: float,
                  delta: float) -> frozenset[Site]:
    """Union over centers of Λ[x_j; l^κ] intersected with Λ[x; L+δ]."""
    outer = L + delta
    r = l ** kappa
    out = set()
    for c in centers:
        out.update(s for s in box(c, r) if sup_dist(s, x) <= outer + 1e-12)
    return frozenset(out)


@dataclass(frozen=True)
class GoodProbability:
    L: float
    p: float
    estimate: Estimate
    target: float
    counts: dict = field(default_factory=dict)

    @property
    def meets_target(self) -> bool:
        return self.estimate.ci_high >= self.target


def _good_one(replica, model, spec, m, L, T_fn, mc_replicas, seed, delta):
    g = delta if delta is not None else model.geometry().delta
    env = sample_environment(model, spec, box((0,) * model.d, L + g), seed, replica)
    v = is_regular(env, (0,) * model.d, m, L, T_fn, mc_replicas, seed=seed + 1 + replica, delta=g)
    return v.verdict


def empirical_good_probability(model: AnimalModel, spec: DisorderSpec, m: float, L: float,
                               T_fn, p: float, env_replicas: int, mc_replicas: int, seed: int = 0,
                               delta: float | None = None, workers: int = 1) -> GoodProbability:
    """Fraction of fresh environments in which the origin is (m, L)-regular."""
    if env_replicas < 30 or mc_replicas < 30:
        raise ValueError("need at least 30 replicas")
    seed = check_seed(seed)
    verdicts = map_replicas(_good_one, env_replicas, model, spec, m, L, T_fn, mc_replicas, seed, delta,
                            workers=workers)
    counts = {k: verdicts.count(k) for k in ("regular", "singular", "inconclusive")}
    est = proportion(counts["regular"], env_replicas)
    return GoodProbability(L, p, est, 1 - L ** (-p), counts)


def scale_good_probability(seq: ScaledSequence, k: int, model: AnimalModel, spec: DisorderSpec, m: float,
                           p: float, env_replicas: int, mc_replicas: int, seed: int = 0,
                           workers: int = 1) -> GoodProbability:
    """Good-probability estimate at scale index ``k`` of a scaled sequence (k in {0, 1} only)."""
    if k >= 2:
        raise ScaleTooLargeError(
            f"scale k={k} has log10 T = {seq.log10_height(k):.4g}; boxes this tall cannot be simulated")
    L = float(seq.scale(k))
    return empirical_good_probability(model, spec, m, L, seq.T_fn(), p, env_replicas, mc_replicas,
                                      seed, workers=workers)


def _psi_one(replica, model, spec, region, seed):
    return psi(sample_environment(model, spec, region, seed, replica))


def initial_scale_probe(model: AnimalModel, spec: DisorderSpec, rho: float, epsilon_rho: float,
                        region: Iterable[Site], replicas: int, seed: int = 0,
                        workers: int = 1) -> tuple[bool, Estimate]:
    """Estimate P(Ψ > ρ); pass when the upper confidence bound is below ``epsilon_rho``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    vals = map_replicas(_psi_one, replicas, model, spec, sorted(region), seed, workers=workers)
    est = proportion(sum(v > rho for v in vals), replicas)
    return est.ci_high < epsilon_rho, est


__all__ = [
    "GoodProbability", "InfeasibleReport", "MultiscaleParameters", "ScaleTooLargeError", "ScaledSequence",
    "buffer_region", "empirical_good_probability", "event_A_check", "event_B_check", "feasible_parameters",
    "initial_scale_probe", "k_delta", "optimal_alpha", "scale_good_probability", "singular_ball_count",
    "strip_event", "strip_probability", "verify_parameters",
]
