"""Three-tier federated learning simulator (client / edge / fedge) with
multiple global models, plus a classic client-server FedAvg baseline.

Everything is deterministic: the same experiment config produces
byte-identical metrics on every run.
"""

__version__ = "0.1.0"
