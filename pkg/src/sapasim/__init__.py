"""Cavity plus double-quantum-dot parametric amplifier simulator."""

__all__ = ["hilbert", "model", "meanfield", "lindblad", "scans", "metrics", "fitting", "config", "cli"]
