"""Multistage SIC receiver simulation with EM channel estimation and
optimal partial interference cancellation."""

__version__ = "0.1.0"
