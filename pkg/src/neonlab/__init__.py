"""Toy-scale lab for reversing self-training degradation by negative
extrapolation in parameter space: theta_merged = theta_r - w (theta_s - theta_r).
"""

__version__ = "0.1.0"
