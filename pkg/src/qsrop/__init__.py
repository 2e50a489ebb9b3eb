"""Exact state-vector simulation of real-or-permutation security games under superposition queries."""

__version__ = "0.1.0"
