"""Weak phase-transition curves for l1 / AMP sparse recovery, with solvers
and a seeded Monte Carlo harness to check them."""

__version__ = "0.1.0"
