"""Non-neural pieces of a satellite poverty-mapping pipeline.

Raster/polygon/annotation parsing, nightlight-aligned tile grids, Gaussian
mixture nightlight classes, quadrant-weighted chip sampling, detection
metrics, province ETL and ridge regression with cross-validation.
"""
from .errors import InputError, InvariantError

__version__ = "0.1.0"

__all__ = ["InputError", "InvariantError", "__version__"]
