"""Coverage and area spectral efficiency of Poisson small-cell networks with NLoS/LoS links."""

__version__ = "0.1.0"
