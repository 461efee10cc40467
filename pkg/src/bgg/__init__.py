"""Blockchain governance game: exact attacker-win analysis, simulation and reserve sizing."""
__version__ = "0.1.0"
