"""Conformal dynamics toolkit: Möbius maps, iterated function systems,
Schottky groups and rigidity diagnostics for fractal limit sets."""

__version__ = "0.1.0"
