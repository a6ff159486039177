"""Ordered tilted walks, their diffusion limits and Wulff-type variational problems."""

__version__ = "0.1.0"
