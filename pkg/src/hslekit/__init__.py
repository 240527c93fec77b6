"""Loewner evolution, hypergeometric SLE and boundary Green function numerics."""
__version__ = "0.1.0"
