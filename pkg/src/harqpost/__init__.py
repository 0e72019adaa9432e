"""Posterior channel/noise statistics of LDPC-coded HARQ Chase combining."""

__version__ = "0.1.0"
