import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from clansim.environment import (DisorderSpec, Environment, RegionError, a_threshold, aleph_estimate,
                                 check_hypotheses, diagnostics, halo_ratios, psi, sample_environment,
                                 upsilon, xi)
from clansim.lattice import box
from clansim.models import (AreaInteractionModel, HardCoreModel, LossNetworkModel, RandomClusterModel,
                            StraussModel)

# ∫_0^∞ ln^6(1+u) e^{-u} du, computed with scipy.integrate.quad (abs err ~2e-9) and frozen
ALEPH_EXP_A6 = 1.453503285336823


def test_degenerate_marginal_gives_constant_rates():
    m = HardCoreModel.domino(2)
    env = sample_environment(m, DisorderSpec.degenerate(0.3), box((0, 0), 2))
    assert {env.rate(a) for a in env.animals()} == {0.3}


def test_same_seed_same_environment():
    m = HardCoreModel.single_site(1)
    spec = DisorderSpec("site", {"name": "exponential", "scale": 1.0})
    e1 = sample_environment(m, spec, box((0,), 5), seed=11)
    e2 = sample_environment(m, spec, box((0,), 5), seed=11)
    e3 = sample_environment(m, spec, box((0,), 5), seed=12)
    assert e1.site_values == e2.site_values
    assert e1.site_values != e3.site_values


def test_unknown_distribution_and_bad_params():
    with pytest.raises(ValueError):
        DisorderSpec("site", {"name": "cauchy"})
    with pytest.raises(ValueError):
        DisorderSpec("site", {"name": "exponential", "scale": -1.0})
    with pytest.raises(ValueError):
        DisorderSpec("site", {"name": "uniform", "low": 2, "high": 1})


def test_compatible_rates_are_independent():
    m = HardCoreModel.single_site(1)
    spec = DisorderSpec("site", {"name": "exponential", "scale": 1.0})
    a, b = m.make((0,)), m.make((3,))
    n = 10_000
    xs = np.empty(n)
    ys = np.empty(n)
    for r in range(n):
        env = sample_environment(m, spec, [(0,), (3,)], seed=5, replica=r)
        xs[r], ys[r] = env.rate(a), env.rate(b)
    assert abs(np.corrcoef(xs, ys)[0, 1]) <= 3 / math.sqrt(n)


def test_diagnostic_examples():
    single = HardCoreModel.single_site(1)
    env = Environment.homogeneous(single, box((0,), 3), 0.4)
    assert upsilon(env) == 0.4 and psi(env) == 0.4 and xi(env) == 0.4
    zero = Environment.homogeneous(single, box((0,), 3), 0.0)
    assert upsilon(zero) == psi(zero) == xi(zero) == 0.0

    dom = HardCoreModel.domino(2)
    env = Environment.homogeneous(dom, box((0, 0), 3), 0.25)
    interior = [(0, 0)]
    assert upsilon(env, interior) == pytest.approx(1.0)
    assert xi(env, interior) == pytest.approx(2.0)
    # a domino meets itself and 6 others; each weighs 2 * 0.25, divided by its own size 2
    assert psi(env, region=box((0, 0), 1)) == pytest.approx(7 * 0.25)
    assert halo_ratios(env) == (1.0, 1.0)


def test_psi_two_mutually_exclusive_animals():
    m = HardCoreModel(1, [[(0,)], [(0,)]])
    env = Environment.homogeneous(m, [(0,)], 1.0, kind_weights=[1.0, 2.0])
    a, b = m.make((0,), 0), m.make((0,), 1)
    # brute force: every pair is incompatible, so each sum is w_A + w_B
    expected = max(sum(env.rate(t) for t in (a, b) if m._incompatible(g, t)) for g in (a, b))
    assert psi(env) == expected == 3.0


def test_empty_region_rejected():
    env = Environment.homogeneous(HardCoreModel.single_site(1), [(0,)], 1.0)
    with pytest.raises(ValueError):
        upsilon(env, [])


def test_scaling_is_linear():
    m = HardCoreModel.domino(2)
    spec = DisorderSpec("site", {"name": "uniform", "low": 0.1, "high": 0.9})
    env = sample_environment(m, spec, box((0, 0), 2), seed=3)
    scaled = sample_environment(m, DisorderSpec("site", spec.marginal, None, {"scale": 3.0}),
                                box((0, 0), 2), seed=3)
    for f in (upsilon, psi, xi):
        assert f(scaled) == pytest.approx(3 * f(env), rel=1e-12)


@given(st.integers(0, 2 ** 32), st.sampled_from(["hardcore", "domino", "strauss", "area", "loss", "cluster"]))
def test_halo_inequalities_hold(seed, name):
    model, spec, core = {
        "hardcore": (HardCoreModel.single_site(1), DisorderSpec("site", {"name": "exponential"}), box((0,), 3)),
        "domino": (HardCoreModel.domino(2), DisorderSpec("site", {"name": "uniform", "low": 0, "high": 1}),
                   box((0, 0), 2)),
        "strauss": (StraussModel(1, {"type": "power", "beta": 0.5}, 1),
                    DisorderSpec("site", {"name": "lognormal", "mean": 0, "sigma": 1}), box((0,), 3)),
        "area": (AreaInteractionModel([(0,), (1,)], [1.0, 0.5, 0.1]),
                 DisorderSpec("site", {"name": "exponential"}), box((0,), 3)),
        "loss": (LossNetworkModel(2, 1, 1), DisorderSpec("site-link", {"name": "exponential"}), box((0,), 3)),
        "cluster": (RandomClusterModel(1, 1), DisorderSpec("site-link", {"name": "uniform", "low": 0.2, "high": 0.8},
                                                            None, {"combine": "random_cluster"}), box((0,), 3)),
    }[name]
    env = sample_environment(model, spec, core, seed=seed)
    dg = diagnostics(env)
    assert dg.upsilon <= dg.xi * (1 + 1e-12)
    assert dg.psi <= dg.u2 / dg.u1 * dg.xi * (1 + 1e-12)
    assert dg.u1 <= dg.u2


def test_aleph_examples():
    m = HardCoreModel.single_site(1)
    zero = aleph_estimate(m, DisorderSpec.degenerate(0.0), 6, [(0,)], 5)
    assert zero.value == 0.0
    one = aleph_estimate(m, DisorderSpec.degenerate(1.0), 6, [(0,)], 5)
    assert one.value == pytest.approx(math.log(2) ** 6) and one.ci_low == one.ci_high


def test_aleph_quadrature_oracle():
    value, _ = quad(lambda u: math.log1p(u) ** 6 * math.exp(-u), 0, math.inf, limit=200)
    assert value == pytest.approx(ALEPH_EXP_A6, rel=1e-9)
    est = aleph_estimate(HardCoreModel.single_site(1), DisorderSpec("site", {"name": "exponential"}), 6,
                         [(0,)], 20_000, seed=2)
    assert est.ci_low - 2 * est.stderr <= ALEPH_EXP_A6 <= est.ci_high + 2 * est.stderr


def test_a_threshold_values():
    assert a_threshold(1) == pytest.approx(5.828427, abs=1e-6)
    assert a_threshold(2) == pytest.approx(19.797959, abs=1e-6)


def test_check_hypotheses_zero_rates_pass():
    rep = check_hypotheses(HardCoreModel.single_site(1), DisorderSpec.degenerate(0.0), 0.01, box((0,), 2), 4)
    assert all(c["pass"] for c in rep["conditions"].values())
    assert rep["a_threshold"] == pytest.approx(5.828427, abs=1e-6)


def test_snapshot_round_trip():
    m = HardCoreModel.domino(2)
    env = sample_environment(m, DisorderSpec("site", {"name": "exponential"}), box((0, 0), 1), seed=4)
    back = Environment.from_json(env.to_json(), m)
    assert [back.rate(a) for a in back.animals()] == [env.rate(a) for a in env.animals()]


def test_restricted_window_errors():
    env = Environment.homogeneous(HardCoreModel.single_site(1), box((0,), 1), 1.0)
    with pytest.raises(RegionError):
        env.restricted(box((0,), 5))
