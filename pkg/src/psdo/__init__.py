"""Zero-order parameter-dependent operator calculus on model stratified geometries.

Desk-scale numerical realization: symbols are small complex expressions,
operators are dense matrices on periodic grids, and the calculus-level
statements (twisted homogeneity, composition expansions, ellipticity and
finite-section index, localization and gluing) become finite matrix
identities checked at explicit tolerances.
"""

from psdo.symexpr import ParseError, EvalError, DiffError, parse, evaluate, diff, to_source
from psdo.geometry import Point, Circle, Cone, Edge, build_geometry

__all__ = [
    "ParseError",
    "EvalError",
    "DiffError",
    "parse",
    "evaluate",
    "diff",
    "to_source",
    "Point",
    "Circle",
    "Cone",
    "Edge",
    "build_geometry",
]

__version__ = "0.1.0"
