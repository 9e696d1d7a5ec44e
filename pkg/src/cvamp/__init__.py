"""Fock-space simulation of noisy photon-subtraction amplifiers for CV key distribution."""

__version__ = "0.1.0"
