"""Scikit-learn style wrappers around the functional API.

Environments play the role of training data: ``fit`` binds an
environment, ``predict``/``transform`` take numeric arrays validated with
``check_array``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .clans import ClanLimits, perfect_samples
from .connectivity import SpaceTimePoint, estimate_G, is_regular
from .environment import Environment, diagnostics


def _check_env(env) -> Environment:
    if not isinstance(env, Environment):
        raise TypeError(f"expected an Environment, got {type(env).__name__}")
    return env


class PerfectSampler(BaseEstimator):
    """Draws exact samples of the invariant measure on a region of a fitted environment."""

    def __init__(self, region=None, max_cylinders: int = 1_000_000, seed: int = 0, workers: int = 1):
        self.region = region
        self.max_cylinders = max_cylinders
        self.seed = seed
        self.workers = workers

    def fit(self, env, y=None):
        self.env_ = _check_env(env)
        region = env.region if self.region is None else frozenset(tuple(s) for s in self.region)
        self.animals_ = env.animals_in(region)
        return self

    def sample(self, n_samples: int = 1) -> np.ndarray:
        """Multiplicity matrix of shape (n_samples, n_animals); rows of -1 mark unclosed runs."""
        check_is_fitted(self, "env_")
        draws = perfect_samples(self.env_, n_samples, self.region, ClanLimits(max_cylinders=self.max_cylinders),
                                self.seed, workers=self.workers)
        out = np.full((n_samples, len(self.animals_)), -1, dtype=np.int64)
        for i, s in enumerate(draws):
            if s.configuration is not None:
                out[i] = [s.configuration.get(a, 0) for a in self.animals_]
        return out


class ConnectivityEstimator(BaseEstimator):
    """Monte Carlo connectivity function of a fitted environment.

    Each row of ``X`` holds ``x (d coordinates), t_X, y (d coordinates), t_Y``.
    """

    def __init__(self, replicas: int = 1000, seed: int = 0, workers: int = 1):
        self.replicas = replicas
        self.seed = seed
        self.workers = workers

    def fit(self, env, y=None):
        self.env_ = _check_env(env)
        self.d_ = env.model.d
        return self

    def _points(self, row):
        d = self.d_
        X = SpaceTimePoint(tuple(int(v) for v in row[:d]), float(row[d]))
        Y = SpaceTimePoint(tuple(int(v) for v in row[d + 1:2 * d + 1]), float(row[2 * d + 1]))
        return X, Y

    def predict_interval(self, X) -> np.ndarray:
        """Columns: estimate, ci_low, ci_high."""
        check_is_fitted(self, "env_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2 * self.d_ + 2:
            raise ValueError(f"expected {2 * self.d_ + 2} columns, got {X.shape[1]}")
        rows = []
        for row in X:
            e = estimate_G(self.env_, *self._points(row), replicas=self.replicas, seed=self.seed,
                           workers=self.workers)
            rows.append((e.value, e.ci_low, e.ci_high))
        return np.array(rows)

    def predict(self, X) -> np.ndarray:
        return self.predict_interval(X)[:, 0]


class RegularityClassifier(BaseEstimator):
    """Labels sites regular / singular / inconclusive at scale ``L``."""

    classes_ = np.array(["inconclusive", "regular", "singular"])

    def __init__(self, m: float = 0.1, L: float = 2.0, T: float = 1.0, replicas: int = 1000,
                 confidence: float = 0.95, seed: int = 0, delta=None, workers: int = 1):
        self.m = m
        self.L = L
        self.T = T
        self.replicas = replicas
        self.confidence = confidence
        self.seed = seed
        self.delta = delta
        self.workers = workers

    def fit(self, env, y=None):
        self.env_ = _check_env(env)
        return self

    def verdicts(self, sites):
        check_is_fitted(self, "env_")
        sites = check_array(sites, dtype=np.int64)
        return [is_regular(self.env_, tuple(int(v) for v in s), self.m, self.L, self.T, self.replicas,
                           self.confidence, self.seed, self.delta, self.workers) for s in sites]

    def predict(self, sites) -> np.ndarray:
        return np.array([v.verdict for v in self.verdicts(sites)])


class DiagnosticsTransformer(TransformerMixin, BaseEstimator):
    """Maps a list of environments to rows (upsilon, psi, xi, u1, u2)."""

    feature_names = ("upsilon", "psi", "xi", "u1", "u2")

    def __init__(self, size_fn=None, region=None):
        self.size_fn = size_fn
        self.region = region

    def fit(self, envs=None, y=None):
        self.n_features_out_ = len(self.feature_names)
        return self

    def transform(self, envs) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        rows = [diagnostics(_check_env(e), self.size_fn, self.region).as_row() for e in envs]
        return check_array(np.array(rows, dtype=np.float64).reshape(len(rows), -1), ensure_min_samples=0)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)


__all__ = ["ConnectivityEstimator", "DiagnosticsTransformer", "PerfectSampler", "RegularityClassifier"]
