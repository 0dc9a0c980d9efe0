"""Incompressible Euler vorticity on the unit sphere: Biot-Savart velocity,
quarter-sphere estimates, the envelope construction and a semi-Lagrangian solver."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
