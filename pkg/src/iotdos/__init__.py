"""Synthetic DoS datasets for IoT intrusion detection.

Devices exchange guarded, timed messages under battery monitors; an attacker
MDP finds the fastest way to drain a battery; traces become labelled
feature tables for a decision tree or MLP.
"""

__version__ = "0.1.0"
