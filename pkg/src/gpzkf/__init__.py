"""Zonotopic Kalman filtering over Gaussian-process models, with a GP-EKF baseline."""
from .filters import GPEKF, GPZKF, SystemSpec, ZkfOptions, theorem2_mode
from .gpcore import GPModel, LipschitzConstants, SEKernel, beta_scaling, estimate_lipschitz
from .zonogeom import Box, Strip, Zonotope

__version__ = "0.1.0"

__all__ = [
    "GPEKF", "GPZKF", "SystemSpec", "ZkfOptions", "theorem2_mode",
    "GPModel", "LipschitzConstants", "SEKernel", "beta_scaling", "estimate_lipschitz",
    "Box", "Strip", "Zonotope",
]
