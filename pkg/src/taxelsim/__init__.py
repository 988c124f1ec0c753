"""Simulated tactile sensor data: FEM indentation, sensor emulation, alignment and learning."""

__version__ = "0.1.0"
