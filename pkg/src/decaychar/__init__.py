"""decaychar: spectral decay characterization for partially dissipative systems."""

__version__ = "0.1.0"
