"""Growing graphs, Ising boundary conditions, and Glauber dynamics gaps."""

from .errors import GlauberGapError

__version__ = "0.1.0"
__all__ = ["GlauberGapError", "__version__"]
