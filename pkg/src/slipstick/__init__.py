"""Analysis, certification and simulation of boundary feedback for an anti-damped wave equation."""

__version__ = "0.1.0"
