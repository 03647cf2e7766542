"""Numerical Finsler-geometry laboratory on flat tori."""

from . import _kernels  # noqa: F401  (enables float64 in jax)

__version__ = "0.1.0"
