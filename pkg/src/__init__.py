"""Toolkit for controlled branching McKean-Vlasov diffusions."""

__version__ = "0.1.0"
