"""Desk-scale standing-and-walking lab: planar biped sim, rewards, PPO, benchmarks."""

__version__ = "0.1.0"
