"""kpzreport: turns kpzlab experiment CSVs into figures.

Reads the documented CSV schemas (collapse, covariance, powercount, drift)
and renders overlay/comparison plots; every figure carries the producing
run's manifest hash in a caption footer.
"""

__version__ = "0.1.0"

from .figures import FigureSpec, render, SchemaMismatch

__all__ = ["FigureSpec", "render", "SchemaMismatch", "__version__"]
