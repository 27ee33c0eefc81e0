"""Spectra of drift Laplacians along geometric flows, with formula verifiers."""

__version__ = "0.1.0"
