"""Incentive-compatible fares for proof-of-payment transit networks."""

__version__ = "0.1.0"
