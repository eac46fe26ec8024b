"""
lawlab: an interactive scientific-law-discovery environment.

Counterfactual physical laws are generated by mutating canonical ones,
embedded in feed-forward model systems, probed through a budgeted
experiment protocol, scored for symbolic correctness and data fidelity,
and solved by a constructive baseline agent.
"""

__version__ = "0.1.0"
