"""Spectra of weighted non-backtracking matrices of sparse random graphs."""
__version__ = "0.1.0"
