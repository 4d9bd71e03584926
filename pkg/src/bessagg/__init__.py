"""Stochastic day-ahead and real-time bidding for aggregated PV + battery households."""

__version__ = "0.1.0"
