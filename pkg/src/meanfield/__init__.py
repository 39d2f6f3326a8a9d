"""Finite-mode bosonic Fock space, Wick calculus and mean-field limit experiments."""

__version__ = "0.1.0"
