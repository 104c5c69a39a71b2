"""Numerical laboratory for orthogonal approximate message passing (OAMP) on
unitarily invariant linear systems: spectra, denoisers, state evolution,
capacity areas and LDPC-coded experiments."""
__version__ = "0.1.0"
