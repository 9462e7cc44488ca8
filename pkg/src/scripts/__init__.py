"""CLI scripts for the testbed."""
