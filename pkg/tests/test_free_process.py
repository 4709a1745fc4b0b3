import io
import math

import numpy as np
import pytest

from clansim.environment import Environment, RegionError
from clansim.free_process import (Cylinder, CylinderConfiguration, FreeProcess, Window, alive_at, count_alive,
                                  dump, restrict, sample_window)
from clansim.lattice import box
from clansim.models import HardCoreModel


@pytest.fixture
def single():
    m = HardCoreModel.single_site(1)
    return m, Environment.homogeneous(m, [(0,)], 0.7)


def test_zero_rate_gives_empty_window():
    env = Environment.homogeneous(HardCoreModel.domino(2), box((0, 0), 2), 0.0)
    cfg = sample_window(env, None, -5, 0)
    assert len(cfg) == 0 and not cfg.boundary_flags


def test_window_invariants():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 2), 0.5)
    region = box((0, 0), 1)
    cfg = sample_window(env, region, -3, 0, seed=1)
    for c in cfg:
        assert c.basis.sites <= frozenset(region)
        assert -3 <= c.birth <= c.death <= 0
        assert 0 <= c.mark <= 1
    births = [c.sort_key() for c in cfg]
    assert births == sorted(births)


def test_window_precondition_errors(single):
    _, env = single
    with pytest.raises(ValueError):
        sample_window(env, None, 0, 0)
    with pytest.raises(RegionError):
        sample_window(env, [(5,)], -1, 0)


def test_stationary_count_small_sample(single):
    m, env = single
    counts = count_alive(env, m.make((0,)), -4.0, 3, range(5000))
    assert abs(counts.mean() - 0.7) <= 3 * math.sqrt(0.7 / 5000)


def test_birth_count_matches_rate(single):
    m, env = single
    a, T, n = m.make((0,)), 5.0, 2000
    total = 0
    for r in range(n):
        cfg = sample_window(env, None, -T, 0, seed=8, replica=r)
        total += sum(1 for c in cfg if not c.truncated and c.basis == a)
    assert abs(total / n - 0.7 * T) <= 4 * math.sqrt(0.7 * T / n)


def test_counts_independent_across_animals():
    m = HardCoreModel.single_site(1)
    env = Environment.homogeneous(m, [(0,), (1,)], 1.0)
    a, b = m.make((0,)), m.make((1,))
    n = 5000
    xa = np.array([len(FreeProcess(env, 2, r).alive_at(a, 0.0)) for r in range(n)])
    xb = np.array([len(FreeProcess(env, 2, r).alive_at(b, 0.0)) for r in range(n)])
    assert abs(np.corrcoef(xa, xb)[0, 1]) <= 4 / math.sqrt(n)


def test_backward_extension_is_consistent(single):
    m, env = single
    a = m.make((0,))
    p1 = FreeProcess(env, 4, 0)
    near = [(c.birth, c.death) for c in p1.covering(a, -2.0)]
    p2 = FreeProcess(env, 4, 0)
    far = [(c.birth, c.death) for c in p2.covering(a, -30.0)]
    assert far[:len(near)] == near


def test_dominating_coupling_is_monotone():
    m = HardCoreModel.single_site(1)
    low = Environment.homogeneous(m, [(0,)], 0.3)
    high = Environment.homogeneous(m, [(0,)], 0.9)
    a = m.make((0,))
    for r in range(50):
        lo = FreeProcess(low, 1, r, dominating_rate=1.0).covering(a, -10)
        hi = FreeProcess(high, 1, r, dominating_rate=1.0).covering(a, -10)
        assert {c.index for c in lo} <= {c.index for c in hi}


def _fixture_config(env, cylinders, t0=0.0, t1=10.0):
    return CylinderConfiguration(Window(frozenset(env.region), t0, t1), tuple(cylinders), env)


def test_restrict_clips_lives():
    m = HardCoreModel.single_site(1)
    env = Environment.homogeneous(m, box((0,), 2), 1.0)
    c = Cylinder(m.make((0,)), 1.0, 5.0, 0.5)
    cfg = _fixture_config(env, [c])
    out = restrict(cfg, [(0,)], 2.0, 3.0)
    (clipped,) = out.cylinders
    assert (clipped.birth, clipped.death) == (2.0, 3.0) and clipped.truncated


def test_restrict_full_window_is_identity_and_idempotent():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 2), 0.5)
    cfg = sample_window(env, None, -2, 0, seed=3)
    full = restrict(cfg, env.region, -2, 0)
    assert full.cylinders == cfg.cylinders
    once = restrict(cfg, box((0, 0), 1), -1, 0)
    twice = restrict(once, box((0, 0), 1), -1, 0)
    assert [(c.basis, c.birth, c.death) for c in once] == [(c.basis, c.birth, c.death) for c in twice]


def test_restrict_drops_straddling_basis():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 2), 1.0)
    c = Cylinder(m.make((1, 0), 0), 0.0, 1.0, 0.1)
    cfg = _fixture_config(env, [c])
    assert len(restrict(cfg, box((0, 0), 1), 0, 1)) == 0


def test_restrict_outside_window_errors():
    env = Environment.homogeneous(HardCoreModel.single_site(1), [(0,)], 1.0)
    cfg = _fixture_config(env, [])
    with pytest.raises(ValueError):
        restrict(cfg, [(0,)], -1, 1)


def test_alive_at_closed_interval():
    m = HardCoreModel.single_site(1)
    env = Environment.homogeneous(m, [(0,)], 1.0)
    c = Cylinder(m.make((0,)), 0.0, 2.0, 0.3)
    cfg = _fixture_config(env, [c])
    assert alive_at(cfg, 1.0) == [c]
    assert alive_at(cfg, 2.0) == [c]
    assert alive_at(_fixture_config(env, []), 1.0) == []


def test_dump_format(single):
    _, env = single
    cfg = sample_window(env, None, -2, 0, seed=1)
    buf = io.StringIO()
    dump(cfg, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# window")
    assert len(lines) == len(cfg) + 1
    for line in lines[1:]:
        fields = line.split()
        assert len(fields) == 5 and float(fields[2]) >= 0


def test_fkg_small_sample():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 2), 0.2)
    x, y = (0, 0), (1, 0)
    n = 4000
    a_hits = b_hits = both = 0
    for r in range(n):
        cfg = sample_window(env, box((0, 0), 1), -1.0, 0.0, seed=9, replica=r)
        A = any(x in c.basis for c in cfg)
        B = any(y in c.basis for c in cfg)
        a_hits += A
        b_hits += B
        both += A and B
    pa, pb, pab = a_hits / n, b_hits / n, both / n
    assert pab >= pa * pb - 3 * math.sqrt(pab * (1 - pab) / n)
