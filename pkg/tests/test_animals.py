import pickle

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clansim.animals import (Animal, AnimalConfiguration, ModelGeometry, ModelMismatchError, default_delta,
                             enumerate_containing, halo, incompatible, verify_delta)
from clansim.lattice import box, diameter, set_distance
from clansim.models import (AreaInteractionModel, HardCoreModel, LossNetworkModel, RandomClusterModel,
                            StraussModel, free_model)


def builtin_models():
    return [
        HardCoreModel.single_site(1),
        HardCoreModel.single_site(2),
        HardCoreModel.domino(2),
        AreaInteractionModel([(0, 0), (1, 0)], {"type": "hardcore"}),
        AreaInteractionModel([(0,), (1,)], [1.0, 0.6, 0.2]),
        StraussModel(2, {"type": "power", "beta": 0.5}, d=1),
        StraussModel(1, {"type": "hardcore"}, d=2),
        LossNetworkModel(2, 1, d=1),
        LossNetworkModel(2, 2, d=2),
        RandomClusterModel(2, d=2),
        free_model(2),
    ]


MODELS = builtin_models()
model_index = st.integers(0, len(MODELS) - 1)


def animal_near(model, data, radius=3):
    pool = model.animals_in(frozenset(box((0,) * model.d, radius)))
    return data.draw(st.sampled_from(pool))


def test_animal_is_immutable_and_hashable():
    a = Animal([(1, 0), (0, 0)])
    assert a.support == ((0, 0), (1, 0))
    assert a.germ == (0, 0)
    with pytest.raises(AttributeError):
        a.kind = 3
    assert hash(a) == hash(Animal([(0, 0), (1, 0)]))
    assert pickle.loads(pickle.dumps(a)) == a


def test_empty_support_rejected():
    with pytest.raises(ValueError):
        Animal([])


def test_configuration_multiplicities():
    a, b = Animal([(0,)]), Animal([(1,)])
    c = AnimalConfiguration([a, a, b])
    assert c[a] == 2 and c.expanded() == [a, a, b]
    with pytest.raises(ValueError):
        AnimalConfiguration({a: -1})
    with pytest.raises(TypeError):
        AnimalConfiguration([(0,)])


def test_single_site_self_exclusion():
    m = HardCoreModel.single_site(1)
    a = m.make((0,))
    assert incompatible(a, a, m)


def test_model_mismatch():
    m1, m2 = HardCoreModel.single_site(1), StraussModel(1, d=1)
    with pytest.raises(ModelMismatchError):
        incompatible(m1.make((0,)), m2.make((0,)), m1)


def test_enumerate_containing_examples():
    single = HardCoreModel.single_site(2)
    region = box((0, 0), 3)
    assert enumerate_containing((0, 0), single, region) == [single.make((0, 0))]
    dom = HardCoreModel.domino(2)
    found = enumerate_containing((0, 0), dom, region)
    assert len(found) == 4 and len(set(found)) == 4
    assert all((0, 0) in a for a in found)
    assert enumerate_containing((9, 9), dom, region) == []


def test_enumerate_respects_region():
    dom = HardCoreModel.domino(2)
    corner = (3, 3)
    found = enumerate_containing(corner, dom, box((0, 0), 3))
    assert len(found) == 2


def test_halo_examples():
    m = HardCoreModel.single_site(1)
    assert halo(m.make((4,)), m) == {(4,)}
    dom = HardCoreModel.domino(2)
    a = dom.make((0, 0), 0)
    assert halo(a, dom) == a.sites


def test_strauss_halo_is_ball():
    m = StraussModel(2, {"type": "hardcore"}, d=1)
    assert halo(m.make((0,)), m) == frozenset((x,) for x in range(-2, 3))


@given(model_index, st.data())
def test_incompatibility_symmetric(i, data):
    m = MODELS[i]
    a, b = animal_near(m, data), animal_near(m, data)
    assert incompatible(a, b, m) == incompatible(b, a, m)


@given(model_index, st.data())
def test_incompatibility_has_range_ell2(i, data):
    m = MODELS[i]
    a, b = animal_near(m, data), animal_near(m, data)
    if incompatible(a, b, m):
        assert set_distance(a.sites, b.sites) <= m.ell2


@given(model_index, st.data())
def test_halo_soundness(i, data):
    m = MODELS[i]
    a, b = animal_near(m, data), animal_near(m, data)
    if b.sites.isdisjoint(halo(a, m)):
        assert not incompatible(a, b, m)


@given(model_index, st.data())
def test_diameter_bound(i, data):
    m = MODELS[i]
    a = animal_near(m, data)
    assert diameter(a.sites) <= m.ell1


@given(model_index, st.data())
def test_interaction_locality_and_range(i, data):
    m = MODELS[i]
    a = animal_near(m, data, 2)
    pool = m.animals_in(frozenset(box(a.germ, 3)))
    xi = data.draw(st.lists(st.sampled_from(pool), max_size=3))
    base = m.interaction(a, xi)
    assert 0.0 <= base <= 1.0
    far = m.make(tuple(v + int(m.ell1 + m.ell2) + 3 for v in a.germ), 0)
    assert m.interaction(a, xi + [far]) == base


def test_default_delta_rules():
    assert default_delta(4, 2) == 12.0
    assert default_delta(0, 1) == 2.0
    assert default_delta(4, 2, "compact") == 3.0
    with pytest.raises(ValueError):
        default_delta(4, 1, "compact")


def test_verify_delta_safe_width_passes():
    for d, l1, l2 in [(1, 1, 0), (2, 1, 1), (2, 2, 2), (3, 1, 2)]:
        ell0 = l1 + l2
        assert verify_delta(ModelGeometry(d, l1, l2, default_delta(ell0, d)), trials=300, seed=1)


def test_verify_delta_zero_width_fails():
    assert not verify_delta(ModelGeometry(2, 2, 2, 0.0), trials=50, seed=0)


def test_verify_delta_compact_width_counterexample():
    # a chain step can advance ell0 = 4 > 3 in the sup norm, jumping the shell
    geo = ModelGeometry(2, 2, 2, default_delta(4, 2, "compact"))
    assert geo.delta == 3.0
    assert not verify_delta(geo, trials=500, seed=0)


def test_geometry_flags():
    g = HardCoreModel.domino(2).geometry()
    assert g.ell0 == 1.0 and not g.nontrivial
    assert ModelGeometry(1, 2, 1, 9).nontrivial
