"""Quantum coherent cooling toolkit: spin-glass problems coupled to a cavity
bath, with semiclassical and dissipative baselines, a hybrid optimization
loop, and time-complexity benchmarks."""

__version__ = "0.1.0"
