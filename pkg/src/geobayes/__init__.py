"""Bayesian inversion of piecewise-continuous permeability with geometric interfaces."""
from .grid import Grid
from .io_core import load_manifest, resolve_manifest, seeded_rng

__all__ = ["Grid", "load_manifest", "resolve_manifest", "seeded_rng"]
__version__ = "0.1.0"
