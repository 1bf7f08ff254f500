"""Lattice gauge theory: sampling, exact enumeration, Wilson loops and couplings."""

__version__ = "0.1.0"
