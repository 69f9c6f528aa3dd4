"""Shadow attacks on sign classifiers and the profile-map 4-channel defense."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
