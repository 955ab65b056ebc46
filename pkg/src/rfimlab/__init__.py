"""Random-field Ising model on Z^2 with disagreement percolation diagnostics.

Submodules
----------
lattice       regions, extended graphs, rectangles
model         couplings, fields, boundary values, extended configurations
exact         brute-force partition functions and pair laws on small regions
sampler       heat-bath Glauber dynamics, coupling from the past, mid-edges
disagreement  disagreement sets, crossings, lassos, explorations
analysis      tilt integrals, anti-concentration, decay and tortuosity fits
checks        randomized identity checks built on ``exact``
harness       batch experiments behind the ``rfim-lab`` command
"""

__version__ = "0.1.0"

from .lattice import Region, Vertex, annulus, box, internal_boundary, rectangle
from .model import BoundarySpec, CouplingParams, ExtendedConfig, FieldRealization, PairSample
from .rng import RandomSource

__all__ = [
    "BoundarySpec",
    "CouplingParams",
    "ExtendedConfig",
    "FieldRealization",
    "PairSample",
    "RandomSource",
    "Region",
    "Vertex",
    "annulus",
    "box",
    "internal_boundary",
    "rectangle",
    "__version__",
]
