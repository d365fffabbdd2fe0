"""Distributed solution of Ax = b by projected consensus gradient flow.

Each agent owns one row (or row block) of ``A`` and keeps its state on the
affine set ``{x : A_i x = b_i}`` while a Laplacian coupling drives all agent
states towards a common value, which then solves the whole system.
"""

from consensus_flow.errors import ConsensusFlowError
from consensus_flow.flow import FlowConfig, LinearSystem
from consensus_flow.graph import NetworkGraph, generate, graph_report
from consensus_flow.harness import fit_rate, run, sweep, track_varying_b
from consensus_flow.spectral import spectral_report

__version__ = "0.1.0"

__all__ = [
    "ConsensusFlowError",
    "FlowConfig",
    "LinearSystem",
    "NetworkGraph",
    "fit_rate",
    "generate",
    "graph_report",
    "run",
    "spectral_report",
    "sweep",
    "track_varying_b",
]
