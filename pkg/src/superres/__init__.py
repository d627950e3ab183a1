"""Dual certificates, least interpolant spaces and BLASSO solvers for
off-the-grid super-resolution of clustered spikes."""

__version__ = "0.1.0"
