"""Deterministic store-carry-forward network simulator.

Heterogeneous nodes move on road graphs, relay tracked messages under
Epidemic, Spray-and-Wait, or MaxProp routing, and an experiment harness
sweeps protocols, carrier-node counts, and spray budgets.
"""

__version__ = "0.1.0"
