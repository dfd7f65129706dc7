"""
Estimation engines and experiment runners.
"""
