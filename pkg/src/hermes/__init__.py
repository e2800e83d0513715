"""Modeling and simulation toolkit for the Hermes hierarchical photonic NoC."""

__version__ = "0.1.0"
