"""Pluripotential convergence laboratory on toric and atomic model spaces.

Submodules: ``measure_core`` (grids, measures, weights), ``toric1d``,
``toric2d``, ``atoms_p1`` (model spaces), ``convergence_lab`` (classifiers,
extraction, MA solver) and ``cli``.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("pshlab")
except PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.1.0"
