"""Independent reference computations shared by several test modules."""

import itertools

from clansim.lattice import box


def brute_incompatible(model, a, b, pool, max_size=2):
    """Search configurations built from ``pool`` for one where adding ``b`` changes M(a | .)."""
    for k in range(max_size + 1):
        for xi in itertools.combinations_with_replacement(pool, k):
            if model.interaction(a, list(xi)) != model.interaction(a, list(xi) + [b]):
                return True
    return False


def nearby_animals(model, a, radius):
    """Every animal whose support lies within ``radius`` of the germ of ``a``."""
    return model.animals_in(frozenset(box(a.germ, radius)))
