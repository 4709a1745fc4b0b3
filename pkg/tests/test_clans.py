import math

import numpy as np
import pytest
from scipy import stats as sps

from clansim.animals import AnimalConfiguration
from clansim.clans import (BUDGET_EXCEEDED, CLOSED, Clan, ClanLimits, ClanStats, ContractViolation,
                           clan_of_point, clan_tail_estimates, first_generation, keep_erase, perfect_sample,
                           perfect_samples)
from clansim.environment import Environment, RegionError, upsilon
from clansim.free_process import Cylinder, FreeProcess
from clansim.lattice import box
from clansim.models import HardCoreModel, free_model


def hardcore(w, radius=0, d=1):
    m = HardCoreModel.single_site(d)
    return m, Environment.homogeneous(m, box((0,) * d, radius), w)


def test_zero_rate_clan_is_empty_and_closed():
    _, env = hardcore(0.0, 3)
    clan = clan_of_point(env, (0,))
    assert clan.closed and clan.members == ()
    assert clan.stats == ClanStats(0.0, 0, 0, 0, 0)


def test_first_generation_empty_without_overlap():
    m, env = hardcore(0.0)
    proc = FreeProcess(env, 0, 0)
    c = Cylinder(m.make((0,)), -1.0, 0.0, 0.5)
    assert first_generation(proc, c) == ()


def test_first_generation_single_site_are_overlapping_copies():
    m, env = hardcore(2.0)
    a = m.make((0,))
    for r in range(30):
        proc = FreeProcess(env, 1, r)
        for c in proc.alive_at(a, 0.0):
            anc = first_generation(proc, c)
            assert c not in anc
            assert all(o.basis == a and o.birth <= c.birth <= o.death for o in anc)


def test_first_generation_mean_matches_upsilon():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 3), 0.2)
    n = 4000
    sizes = [len(clan_of_point(env, (0, 0), seed=2, replica=r).first) for r in range(n)]
    ups = upsilon(env, [(0, 0)])
    assert ups == pytest.approx(0.8)
    assert abs(np.mean(sizes) - ups) <= 4 * math.sqrt(ups / n)


def test_tl_at_least_age_of_root():
    _, env = hardcore(1.0)
    for r in range(100):
        clan = clan_of_point(env, (0,), seed=3, replica=r)
        for c in clan.first:
            assert clan.stats.tl >= -c.birth


def test_budget_exceeded_is_reported():
    _, env = hardcore(5.0)
    clan = clan_of_point(env, (0,), limits=ClanLimits(max_cylinders=2), seed=1)
    assert clan.status == BUDGET_EXCEEDED


def test_subcritical_closure_small_sample():
    _, env = hardcore(0.5, 4)
    assert all(clan_of_point(env, (0,), seed=4, replica=r).closed for r in range(2000))


def _two_cylinder_clan():
    m = HardCoreModel(1, [[(0,)], [(0,)]])
    older = Cylinder(m.make((0,), 0), -2.0, 1.0, 0.9)
    younger = Cylinder(m.make((0,), 1), -1.0, 0.5, 0.1)
    anc = {older: (), younger: (older,)}
    return m, older, younger, Clan(None, [(younger,), (older,)], CLOSED, ClanStats(2.0, 0, 1, 2, 2), anc,
                                   (older, younger), 0.0, m)


def test_keep_erase_hand_trace():
    _, older, younger, clan = _two_cylinder_clan()
    part = keep_erase(clan)
    assert part.kept == {older} and part.erased == {younger}
    assert part.kept | part.erased == set(clan.members) and not part.kept & part.erased


def test_keep_erase_single_cylinder_kept():
    m = HardCoreModel.single_site(1)
    c = Cylinder(m.make((0,)), -1.0, 0.0, 0.99)
    clan = Clan(None, [(c,)], CLOSED, ClanStats(1.0, 0, 1, 1, 1), {c: ()}, (c,), 0.0, m)
    assert keep_erase(clan).kept == {c}


def test_keep_erase_interaction_one_keeps_all():
    m = free_model(1)
    env = Environment.homogeneous(m, box((0,), 1), 3.0)
    proc = FreeProcess(env, 0, 0)
    roots = [c for a in env.animals() for c in proc.alive_at(a, 0.0)]
    from clansim.clans import clan_of_cylinders
    clan = clan_of_cylinders(proc, roots, 0.0)
    part = keep_erase(clan)
    assert part.erased == frozenset() and part.kept == frozenset(clan.members)


def test_keep_erase_is_pure():
    _, env = hardcore(1.5, 2)
    clan = clan_of_point(env, (0,), seed=5)
    assert keep_erase(clan) == keep_erase(clan)


def test_keep_erase_refuses_open_clan():
    _, _, _, clan = _two_cylinder_clan()
    clan.status = BUDGET_EXCEEDED
    with pytest.raises(ContractViolation):
        keep_erase(clan)


def test_perfect_sample_zero_rate():
    _, env = hardcore(0.0, 2)
    s = perfect_sample(env, box((0,), 1))
    assert s.status == CLOSED and s.configuration == AnimalConfiguration()


def test_perfect_sample_region_error():
    _, env = hardcore(1.0, 1)
    with pytest.raises(RegionError):
        perfect_sample(env, box((0,), 4))


def test_perfect_sample_never_violates_exclusion():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 3), 0.1)
    for s in perfect_samples(env, 100, seed=6, region=box((0, 0), 1)):
        sites = [x for a in s.configuration.expanded() for x in a.support]
        assert len(sites) == len(set(sites))


def test_perfect_sample_small_ctmc_agreement():
    m = HardCoreModel(1, [[(0,)], [(0,)]])
    env = Environment.homogeneous(m, [(0,)], 1.0, kind_weights=[1.0, 2.0])
    n = 6000
    counts = np.zeros(3)
    for s in perfect_samples(env, n, seed=7):
        cfg = s.configuration
        counts[0 if not cfg else 1 + next(iter(cfg)).kind] += 1
    p = sps.chisquare(counts, n * np.array([0.25, 0.25, 0.5])).pvalue
    assert p > 0.001


def test_free_model_sample_matches_poisson():
    m = free_model(1)
    env = Environment.homogeneous(m, [(0,)], 0.8)
    n = 3000
    counts = [sum(s.configuration.values()) for s in perfect_samples(env, n, seed=8)]
    assert abs(np.mean(counts) - 0.8) <= 4 * math.sqrt(0.8 / n)
    assert abs(np.var(counts) - 0.8) <= 0.1


def test_clan_monotone_under_coupled_rates():
    m = HardCoreModel.domino(2)
    low = Environment.homogeneous(m, box((0, 0), 4), 0.1)
    high = Environment.homogeneous(m, box((0, 0), 4), 0.2)
    for r in range(100):
        cl = clan_of_point(low, (0, 0), process=FreeProcess(low, 3, r, dominating_rate=0.3))
        ch = clan_of_point(high, (0, 0), process=FreeProcess(high, 3, r, dominating_rate=0.3))
        assert {(c.basis, c.index) for c in cl.members} <= {(c.basis, c.index) for c in ch.members}


def test_clan_unchanged_by_far_animals():
    m = HardCoreModel.domino(2)
    small = Environment.homogeneous(m, box((0, 0), 5), 0.15)
    big = Environment.homogeneous(m, box((0, 0), 9), 0.15)
    limits = ClanLimits(max_radius=4)
    for r in range(50):
        a = clan_of_point(small, (0, 0), limits=limits, seed=4, replica=r)
        b = clan_of_point(big, (0, 0), limits=limits, seed=4, replica=r)
        assert a.status == b.status
        if a.closed:
            assert [(c.basis, c.birth) for c in a.members] == [(c.basis, c.birth) for c in b.members]


def test_tail_estimates_zero_rate():
    _, env = hardcore(0.0, 3)
    table = clan_tail_estimates(env, (0,), {"T": [0.5, 1], "L": [0, 1]}, 100)
    assert all(e.value == 0 for _, e in table.tl_rows + table.sd_rows)


def test_tail_estimates_need_replicas():
    _, env = hardcore(0.5, 3)
    with pytest.raises(ValueError):
        clan_tail_estimates(env, (0,), {"T": [1]}, 99)


def test_sd_tail_nonincreasing_and_decaying_for_dominoes():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 8), 1 / 14)
    table = clan_tail_estimates(env, (0, 0), {"L": [0, 1, 2, 3]}, 2000, seed=1)
    vals = [e.value for _, e in table.sd_rows]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert table.sd_fit().slope < 0
