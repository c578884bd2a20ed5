"""Deterministic multi-agent simulator for collaborative spectrum sharing.

Recurrent dueling double-Q agents pick transmission channels over slotted
multi-channel ALOHA by restricting themselves to their M highest-valued
channels and transmitting on the least loaded one, with channel loads
estimated from each agent's own ACK statistics.
"""

__version__ = "0.1.0"
