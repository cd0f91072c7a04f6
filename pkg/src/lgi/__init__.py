"""Bayesian inference of true species interactions from biased, incomplete
interaction records, with latent factors informed by traits and taxonomy."""

__version__ = "0.1.0"

from .data import (DataError, InteractionData, TaxonomyCorrelation, TraitMatrix, build_taxonomy_correlation,
                   compute_effort, load_events, load_matrices, load_taxonomy, load_traits)
from .posterior import PRESETS, ChainConfig, PosteriorDraws
from .state import ConfigError, PriorConfig

__all__ = [
    "ChainConfig", "ConfigError", "DataError", "InteractionData", "PRESETS", "PosteriorDraws", "PriorConfig",
    "TaxonomyCorrelation", "TraitMatrix", "build_taxonomy_correlation", "compute_effort", "load_events",
    "load_matrices", "load_taxonomy", "load_traits",
]
