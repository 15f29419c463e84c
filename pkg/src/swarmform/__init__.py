"""Decentralised goal assignment and energy-optimal trajectories for double-integrator swarms."""
__version__ = "0.1.0"
