"""nsplab: spectral laboratory for stochastic Navier-Stokes-Poisson limits."""

__version__ = "0.1.0"
