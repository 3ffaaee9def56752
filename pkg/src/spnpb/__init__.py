"""Stochastic predictive network with parametric bias, plus its trainer,
online bias adapter, view controller, simulated robot/world, and the
experiment CLI/service around them."""

__version__ = "0.1.0"
