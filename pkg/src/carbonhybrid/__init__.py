"""Hybrid GARCH-GRU price forecasting and iceberg-order purchasing for carbon allowances."""

__version__ = "0.1.0"
