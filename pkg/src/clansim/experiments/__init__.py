"""Experiment configs, the command-line runner and reference oracles."""

from .config import ConfigError, load_config, resolve_config
from .oracles import StateSpaceOverflow, StationaryDistribution, ctmc_stationary

__all__ = ["ConfigError", "StateSpaceOverflow", "StationaryDistribution", "ctmc_stationary", "load_config",
           "resolve_config"]
