"""Experiment harness: configuration, synthetic data, pipeline and CLI."""
