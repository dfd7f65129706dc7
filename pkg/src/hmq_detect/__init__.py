"""
High-rate quantization for Neyman-Pearson detection of hidden Markov processes.
"""

__version__ = "0.1.0"
