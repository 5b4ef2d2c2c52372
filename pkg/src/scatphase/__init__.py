"""One-dimensional Schrodinger scattering: forward problem, spectra, Marchenko inversion
and phase-based reconstruction of the potential transform."""

__version__ = "0.1.0"

from .errors import GridError, InvalidDataError, ScatteringError, ScatteringWarning, SolverError
from .numgrid import Grid, SampledFunction, SpectralFunction
from .potential import Potential, builtin, default_catalog
from .spectrum import BoundStateSet

__all__ = [
    "BoundStateSet", "Grid", "GridError", "InvalidDataError", "Potential", "SampledFunction",
    "ScatteringError", "ScatteringWarning", "SolverError", "SpectralFunction", "builtin",
    "default_catalog", "__version__",
]
