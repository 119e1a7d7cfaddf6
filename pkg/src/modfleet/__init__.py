"""Mobility-on-demand fleet management: predictive positioning, ridesharing
assignment and learned customer ratings, plus a discrete-event simulator."""

from .network import NetworkGraph, load_bundled_graph, load_graph, precompute_routes
from .simulator import SimConfig, SimResult, run_simulation

__version__ = "0.1.0"

__all__ = ["NetworkGraph", "SimConfig", "SimResult", "load_bundled_graph", "load_graph", "precompute_routes", "run_simulation"]
