"""Verification toolkit for minimal sufficient statistics.

Likelihood-ratio proportionality on probe grids, the three checkable
criteria, exact finite models, and two counterexample reproductions.
"""

__version__ = "0.1.0"
