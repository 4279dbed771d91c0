"""hypsel: hypothesis-selection reinforcement learning for a synthetic
hybrid HMM recognizer, end to end on generated data."""

__version__ = "0.1.0"

from . import _kernels

KERNEL_BACKEND = _kernels.BACKEND
