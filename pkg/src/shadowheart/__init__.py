"""Simulator and calculators for compressed asynchronous SGD on heterogeneous workers."""
