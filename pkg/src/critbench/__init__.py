"""Convergence-to-criticality testbed for NAG, RMSProp and ADAM."""

__version__ = "0.1.0"
