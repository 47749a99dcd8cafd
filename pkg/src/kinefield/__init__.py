"""Object-factored motion for dynamic Gaussian scenes with a kinematics-conditioned language field."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
