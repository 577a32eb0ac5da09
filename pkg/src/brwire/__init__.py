"""Branching random walk with immigration in a random environment.

Simulation of the particle system, closed-form theory constants for the
built-in law family, and the distance/rate statistics needed to check the
central limit theorem, its Berry-Esseen bounds, and the submartingale
convergence-rate diagnostics at desk scale.
"""

__version__ = "0.1.0"

from . import config, engine, model, stats, theory  # noqa: F401
