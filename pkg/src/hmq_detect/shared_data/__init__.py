"""
Persistence of experiment artifacts.
"""
