"""Amplitude-estimation-driven simulation-based optimisation."""
