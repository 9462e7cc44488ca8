"""Federated learning poisoning testbed across the fake / hybrid / compromised adversary spectrum."""

__version__ = "0.1.0"
