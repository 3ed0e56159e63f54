"""Queueing models, simulation and placement for DNN inference on shared edge accelerators."""

__version__ = "0.1.0"
