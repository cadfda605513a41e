"""Benchmarks for synthetic wearable-sensor time series."""
