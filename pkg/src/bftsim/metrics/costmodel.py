"""Closed-form communication cost model, used as an independent oracle
for the simulator's byte accounting.

All costs are normalized per confirmed payload byte: "cost 2.0" means
two bytes moved through a replica for every payload byte confirmed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core.types import BadParams


@dataclass(frozen=True)
class CostModelInputs:
    n: int  # replicas
    datablock_bytes: int  # payload bytes per datablock (alpha)
    block_batch: int  # datablock hashes per proposal (tau)
    digest_size: int = 32  # beta
    share_size: int = 48  # kappa
    payload: int = 128  # bytes per request

    def __post_init__(self) -> None:
        for name in ("n", "datablock_bytes", "block_batch", "digest_size", "share_size", "payload"):
            if getattr(self, name) <= 0:
                raise BadParams(f"{name} must be positive")

    @property
    def vote_overhead(self) -> float:
        """Per-datablock agreement bytes: one digest plus four vote legs
        amortized over the proposal batch."""
        return self.digest_size + 4 * self.share_size / self.block_batch


def analytic_leader_cost(inputs: CostModelInputs) -> float:
    """Leader bytes per confirmed payload byte in the optimistic case:
    it receives every datablock once and pays the agreement overhead
    toward each of the n-1 others."""
    return inputs.vote_overhead * (inputs.n - 1) / inputs.datablock_bytes + 1.0


def analytic_replica_cost(inputs: CostModelInputs) -> float:
    """Non-leader bytes per confirmed payload byte: client intake plus
    receiving n-2 peers' datablocks plus multicasting its own to n-1,
    amortized over n-1 generators, plus its share of agreement bytes."""
    return 2.0 + inputs.vote_overhead / inputs.datablock_bytes


def scaling_factor(inputs: CostModelInputs) -> float:
    """Heaviest per-replica cost per confirmed payload byte.  With the
    datablock size growing linearly in n-1 this is constant in n."""
    return max(analytic_leader_cost(inputs), analytic_replica_cost(inputs))


def scaleup_ratio(inputs: CostModelInputs) -> float:
    """Confirmed-payload throughput gained per unit of added per-replica
    capacity; approaches 1/2 when the agreement overhead is small
    relative to the per-replica datablock share."""
    return 1.0 / scaling_factor(inputs)


def centralized_dissemination_cost(n: int) -> float:
    """Leader cost per payload byte when the leader itself ships every
    request to all n-1 others: the design this protocol replaces."""
    return float(n - 1)


def retrieval_cost_bound(inputs: CostModelInputs, case: str = "b") -> float:
    """Worst-case extra bytes per replica, per confirmed payload byte,
    spent on recovering withheld datablocks.

    Case "b": synchronous network, up to f generators disseminating
    selectively.  Case "c": asynchronous period, where even honest
    replicas may have to query every datablock.
    """
    n = inputs.n
    f = (n - 1) // 3
    alpha = inputs.datablock_bytes
    beta = inputs.digest_size
    log_n = math.log2(n)
    if case == "b":
        inner = alpha + beta * (f * log_n + 3 / 5)
    elif case == "c":
        inner = alpha + beta * ((f + 1) * log_n + 3 / 5)
    else:
        raise BadParams(f"retrieval bound case must be 'b' or 'c' (got {case!r})")
    return 5 * inner / (3 * alpha)
