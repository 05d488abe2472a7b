"""Decentralized multi-agent actor-critic training with networked critics."""

__version__ = "0.1.0"
