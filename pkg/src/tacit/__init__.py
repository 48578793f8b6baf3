"""Cooperative multi-agent Q-learning with selective state-space agents,
training-time attention communication, and progressive regeneration of the
communicated information for fully decentralized execution."""

__version__ = "0.1.0"
