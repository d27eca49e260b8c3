"""Numerical laboratory for generalized photon subtraction (GPS).

Heralded non-Gaussian states from two squeezed vacua on a variable beam
splitter, their phase-space characterization, synthetic homodyne data and
maximum-likelihood reconstruction.
"""

__version__ = "0.1.0"
