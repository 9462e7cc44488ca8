"""Test suite for the federated poisoning testbed."""
