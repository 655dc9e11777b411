"""kpzlab: a numerical and combinatorial laboratory for weak-coupling KPZ in d >= 3.

The package simulates the KPZ / Edwards-Wilkinson / stochastic-heat equations on a
periodic lattice, evaluates the Cole-Hopf field as a directed-polymer average,
builds the dyadic heat-kernel decomposition with its power-counting checks,
computes leading-order renormalized constants by quadrature, runs the exact
forest-formula combinatorics, and measures the diffusive scaling collapse at
desk scale.
"""

__version__ = "0.1.0"

from .config import SimConfig, SchemaError
from .streams import stream

__all__ = ["SimConfig", "SchemaError", "stream", "__version__"]
