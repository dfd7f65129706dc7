"""
Data structures shared across the package.
"""
