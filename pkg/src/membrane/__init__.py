"""Simulator for cell-like membrane systems: transition and active-membrane
modes under maximally parallel semantics, plus a runtime of independent,
self-reproducing engine instances."""
from .dsl import ParseError, parse, serialize
from .engine import Engine, EngineError, RunResult, Trace, run
from .model import (
    Configuration, MembraneInstance, Multiset, PSystemSpec, Selection, canonical_serialize,
    validate_spec,
)
from .rng import Rng

__all__ = [
    "Configuration", "Engine", "EngineError", "MembraneInstance", "Multiset", "PSystemSpec",
    "ParseError", "Rng", "RunResult", "Selection", "Trace", "canonical_serialize", "parse",
    "run", "serialize", "validate_spec",
]
