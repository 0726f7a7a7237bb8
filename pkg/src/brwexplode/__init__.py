"""Explosion of branching random walks with heavy-tailed offspring."""

from .criteria import EXPLODES, NO_EXPLOSION, UNDETERMINED, minsum_criterion, sigma_corollary, speed_f
from .distributions import (
    Atomic,
    Deterministic,
    DoubleExpSmall,
    Exponential,
    Geometric,
    LogTail,
    MixtureWithZeroAtom,
    PointMass,
    PowerTail,
    Uniform01,
)
from .gwsim import SimConfig, grow_generations, min_displacement
from .kernels import BACKEND

__version__ = "0.1.0"
