"""Core testbed modules."""
