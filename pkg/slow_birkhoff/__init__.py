"""
slow-birkhoff: exact constructions of slowly converging Birkhoff averages.
"""

__version__ = "1.0.0"
