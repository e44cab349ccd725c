"""Risk-aware UAV/UGV rendezvous planning as a chance-constrained MDP."""

__version__ = "0.1.0"
