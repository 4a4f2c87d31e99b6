"""Simulation toolkit: signals, plants, integrators, runner and logs."""
