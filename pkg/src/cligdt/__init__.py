"""Confidence-level-driven IGDT dispatch for distribution networks.

Compact two-stage model, data-driven uncertainty sets, C&CG and cut-recycling
parametric C&CG, a Fibonacci search over the confidence level, and
brute-force oracles for validation.
"""
__version__ = "0.1.0"
