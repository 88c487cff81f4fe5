"""Vlasov-Poisson-Landau solver and verification laboratory."""

__version__ = "0.1.0"
