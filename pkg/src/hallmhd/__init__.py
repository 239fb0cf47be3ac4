"""Azimuthal ideal Hall-MHD: symbolic cylindrical calculus and FV solver."""

__version__ = "0.1.0"

from . import cyltensor, diagnostics, grid, solver, symexpr  # noqa: F401
