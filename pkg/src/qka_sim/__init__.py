"""Seedable simulator for verifiable multi-party quantum key agreement on six-qubit cluster states."""

__version__ = "0.1.0"
