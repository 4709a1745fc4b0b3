"""Exact stationary laws of tiny systems, used to check the perfect sampler.

Nothing here touches the clan machinery: the generator is built straight
from the birth and death rates and solved with dense linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..animals import Animal, AnimalModel


class StateSpaceOverflow(RuntimeError):
    """The reachable state space is larger than the configured cap."""


@dataclass(frozen=True)
class StationaryDistribution:
    animals: tuple[Animal, ...]
    states: tuple[tuple[int, ...], ...]
    pi: np.ndarray
    generator: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.abs(self.pi @ self.generator).max())

    def prob(self, state: tuple[int, ...]) -> float:
        return float(self.pi[self.states.index(tuple(state))])

    def marginal(self, animal: Animal) -> dict[int, float]:
        i = self.animals.index(animal)
        out: dict[int, float] = {}
        for s, p in zip(self.states, self.pi):
            out[s[i]] = out.get(s[i], 0.0) + float(p)
        return out


def ctmc_stationary(model: AnimalModel, rates, animals: Iterable[Animal] | None = None, region=None,
                    max_states: int = 12, max_multiplicity: int | None = None) -> StationaryDistribution:
    """Stationary law of the birth-death chain restricted to a few animals.

    ``rates`` is an Environment or a mapping from animal to birth rate.
    A birth of γ in state η happens at rate M(γ|η) w(γ), a death at rate
    η(γ).  With ``max_multiplicity`` births beyond that count are
    suppressed, which truncates otherwise infinite chains.
    """
    if animals is None:
        if region is None:
            region = rates.region
        animals = rates.animals_in(region)
    animals = tuple(animals)
    rate = rates.rate if hasattr(rates, "rate") else (lambda a: float(rates[a]))
    w = [rate(a) for a in animals]
    n = len(animals)

    def config(state):
        return {animals[i]: k for i, k in enumerate(state) if k}

    start = (0,) * n
    index = {start: 0}
    order = [start]
    edges: list[tuple[int, int, float]] = []
    head = 0
    while head < len(order):
        state = order[head]
        head += 1
        current = config(state)
        for i in range(n):
            moves = []
            if w[i] > 0 and (max_multiplicity is None or state[i] < max_multiplicity):
                m = model.interaction(animals[i], current)
                if m > 0:
                    moves.append((1, m * w[i]))
            if state[i] > 0:
                moves.append((-1, float(state[i])))
            for step, r in moves:
                nxt = state[:i] + (state[i] + step,) + state[i + 1:]
                if nxt not in index:
                    if len(order) >= max_states:
                        raise StateSpaceOverflow(f"more than {max_states} reachable states")
                    index[nxt] = len(order)
                    order.append(nxt)
                edges.append((index[state], index[nxt], r))
    k = len(order)
    A = np.zeros((k, k))
    for a, b, r in edges:
        A[a, b] += r
    A[np.diag_indices(k)] = -A.sum(axis=1)
    system = np.vstack([A.T, np.ones(k)])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    dist = StationaryDistribution(animals, tuple(order), pi, A)
    if dist.residual >= 1e-10:
        raise ArithmeticError(f"stationary solve residual {dist.residual:.3g} is too large")
    return dist


__all__ = ["StateSpaceOverflow", "StationaryDistribution", "ctmc_stationary"]
