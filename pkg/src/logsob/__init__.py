"""Numerical toolkit for modified log-Sobolev inequalities of log-concave measures on the line."""

__version__ = "0.1.0"
