"""Metrics, experiment driver, property suite and command-line entry point."""
