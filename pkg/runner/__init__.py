"""Experiment runner: named experiments, deterministic seeds, checksummed artifacts."""
