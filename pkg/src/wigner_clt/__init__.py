"""Deterministic predictions and Monte Carlo checks for fluctuations of
alternating products ``<f_1(W)A_1 ... f_k(W)A_k>`` of a Wigner matrix."""

__version__ = "0.1.0"
