"""Linearised coagulation operators, symbols, solvers and norms."""

__version__ = "0.1.0"
