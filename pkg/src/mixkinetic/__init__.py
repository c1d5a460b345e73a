"""Homogeneous Boltzmann mixtures with non-cutoff hard-potential kernels: particle simulation and estimate checks."""

__version__ = "0.1.0"
