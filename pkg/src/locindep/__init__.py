"""Influence between components of multivariate jump diffusions.

Declare a system with :mod:`locindep.model`, read off its direct-influence
graph with :mod:`locindep.graph`, simulate it with :mod:`locindep.simulate`,
and check influence statements from data with :mod:`locindep.likelihood`
and :mod:`locindep.inference`.
"""

from .expr import evaluate, free_components, parse, to_source
from .graph import InfluenceGraph, ancestors, classify_pair, pair_taxonomy, syntactic_graph
from .model import ProcessSpec, builtin_spec, dependency_set, is_wcli, load_spec, validate
from .simulate import PathSet, discretize, simulate

__all__ = [
    "parse", "to_source", "evaluate", "free_components",
    "ProcessSpec", "load_spec", "builtin_spec", "validate", "dependency_set", "is_wcli",
    "PathSet", "simulate", "discretize",
    "InfluenceGraph", "syntactic_graph", "classify_pair", "pair_taxonomy", "ancestors",
]

__version__ = "0.1.0"
