"""Price-signal generation for price-responsive flexible demand.

Nonlinear and linearized flexibility functions, a known-parameter price
controller, a projection-based model-reference adaptive price controller,
and a scenario-driven simulator.
"""

__version__ = "0.1.0"
