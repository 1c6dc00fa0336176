from .costmodel import (
    CostModelInputs,
    analytic_leader_cost,
    analytic_replica_cost,
    centralized_dissemination_cost,
    retrieval_cost_bound,
    scaleup_ratio,
    scaling_factor,
)
from .ledger import MeasuredCosts, MetricsLedger, NoConfirmations, ledger_csv, measured_costs

__all__ = [
    "CostModelInputs",
    "MeasuredCosts",
    "MetricsLedger",
    "NoConfirmations",
    "analytic_leader_cost",
    "analytic_replica_cost",
    "centralized_dissemination_cost",
    "ledger_csv",
    "measured_costs",
    "retrieval_cost_bound",
    "scaleup_ratio",
    "scaling_factor",
]
