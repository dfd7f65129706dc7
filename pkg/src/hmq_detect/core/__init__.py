"""
Numerical core: model, likelihoods, quantizers and quadrature.
"""
