"""Density-space navigation: data-driven Perron-Frobenius generators, a
traversability-weighted linear program and the recovered feedback law."""

__version__ = "0.1.0"
