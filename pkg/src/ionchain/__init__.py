"""Anharmonic phonon shifts and effective spin couplings of trapped-ion chains."""

__version__ = "0.1.0"
