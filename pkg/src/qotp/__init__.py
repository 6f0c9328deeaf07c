"""
qotp - Entanglement-based probabilistic one-time programs
"""

__version__ = "0.2.0"
