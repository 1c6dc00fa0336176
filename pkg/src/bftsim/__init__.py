"""Leader-based BFT with decoupled data dissemination: deterministic
replica state machines, a discrete-event partial-synchrony simulator,
and a communication cost-model analytics layer."""

__version__ = "0.1.0"
