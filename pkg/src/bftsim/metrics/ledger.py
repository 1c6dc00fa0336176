"""Per-replica, per-category byte and count accounting.

The simulator records every send and delivery here; the analysis side
turns the raw events into normalized costs (bytes moved per confirmed
payload byte) inside a steady-state window, plus category breakdowns,
latencies, and view-change durations.
"""

from __future__ import annotations

import csv
import io
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from ..core.messages import CATEGORIES
from ..core.types import RequestId


class NoConfirmations(Exception):
    pass


@dataclass
class _Direction:
    bytes_by_cat: dict[str, int] = field(default_factory=dict)
    count_by_cat: dict[str, int] = field(default_factory=dict)
    times: list[int] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)

    def record(self, category: str, size: int, time_us: int) -> None:
        self.bytes_by_cat[category] = self.bytes_by_cat.get(category, 0) + size
        self.count_by_cat[category] = self.count_by_cat.get(category, 0) + 1
        self.times.append(time_us)
        self.sizes.append(size)

    def total(self) -> int:
        return sum(self.bytes_by_cat.values())

    def bytes_in_window(self, lo: int, hi: int) -> int:
        i = bisect_left(self.times, lo)
        j = bisect_right(self.times, hi)
        return sum(self.sizes[i:j])


@dataclass
class MetricsLedger:
    n: int
    payload: int
    sent: list[_Direction] = field(init=False)
    received: list[_Direction] = field(init=False)
    # (time, serial, payload bytes) of each block's first confirmation
    block_confirmations: list[tuple[int, int, int]] = field(default_factory=list)
    # request id -> submission time
    submissions: dict[RequestId, int] = field(default_factory=dict)
    # request id -> replica -> first ack time
    acks: dict[RequestId, dict[int, int]] = field(default_factory=dict)
    # (view abandoned, trigger time, adoption time of the successor)
    view_changes: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.sent = [_Direction() for _ in range(self.n)]
        self.received = [_Direction() for _ in range(self.n)]

    # -- raw recording ------------------------------------------------------

    def record_send(self, replica: int, category: str, size: int, time_us: int) -> None:
        self.sent[replica].record(category, size, time_us)

    def record_receive(self, replica: int, category: str, size: int, time_us: int) -> None:
        self.received[replica].record(category, size, time_us)

    def record_block_confirmation(self, time_us: int, serial: int, payload_bytes: int) -> None:
        self.block_confirmations.append((time_us, serial, payload_bytes))

    def record_submission(self, rid: RequestId, time_us: int) -> None:
        self.submissions.setdefault(rid, time_us)

    def record_ack(self, rid: RequestId, replica: int, time_us: int) -> None:
        self.acks.setdefault(rid, {}).setdefault(replica, time_us)

    # -- derived ------------------------------------------------------------

    def total_bytes(self, replica: int) -> tuple[int, int]:
        return self.sent[replica].total(), self.received[replica].total()

    def confirmed_payload_bytes(self) -> int:
        return sum(p for _, _, p in self.block_confirmations)

    def steady_window(self) -> tuple[int, int]:
        """Time span excluding the first and last 10% of block confirmations."""
        if not self.block_confirmations:
            raise NoConfirmations("no blocks confirmed")
        times = sorted(t for t, _, _ in self.block_confirmations)
        k = len(times)
        lo = times[k // 10]
        hi = times[k - 1 - k // 10]
        if hi < lo:
            lo, hi = times[0], times[-1]
        return lo, hi

    def request_latencies_us(self) -> list[int]:
        out = []
        for rid, t0 in self.submissions.items():
            got = self.acks.get(rid)
            if got:
                out.append(min(got.values()) - t0)
        return out


@dataclass(frozen=True)
class ReplicaCost:
    replica: int
    sent_bytes: int
    received_bytes: int
    cost: float  # (sent + received) / confirmed payload, steady-state window


@dataclass(frozen=True)
class MeasuredCosts:
    window: tuple[int, int]
    confirmed_payload: int
    per_replica: tuple[ReplicaCost, ...]
    breakdown: dict[int, dict[str, dict[str, float]]]  # replica -> dir -> category -> share

    def cost_of(self, replica: int) -> float:
        return self.per_replica[replica].cost

    def max_cost(self) -> float:
        return max(rc.cost for rc in self.per_replica)


def measured_costs(ledger: MetricsLedger) -> MeasuredCosts:
    """Normalized per-replica costs over the steady-state window, with a
    whole-run category breakdown per direction."""
    lo, hi = ledger.steady_window()
    payload = sum(p for t, _, p in ledger.block_confirmations if lo <= t <= hi)
    if payload == 0:
        raise NoConfirmations("no confirmed payload inside the steady-state window")
    per = []
    for r in range(ledger.n):
        s = ledger.sent[r].bytes_in_window(lo, hi)
        v = ledger.received[r].bytes_in_window(lo, hi)
        per.append(ReplicaCost(r, s, v, (s + v) / payload))
    breakdown: dict[int, dict[str, dict[str, float]]] = {}
    for r in range(ledger.n):
        row: dict[str, dict[str, float]] = {"sent": {}, "received": {}}
        for direction, store in (("sent", ledger.sent[r]), ("received", ledger.received[r])):
            total = store.total()
            if total:
                for cat in CATEGORIES:
                    b = store.bytes_by_cat.get(cat, 0)
                    if b:
                        row[direction][cat] = b / total
        breakdown[r] = row
    return MeasuredCosts((lo, hi), payload, tuple(per), breakdown)


def ledger_csv(ledger: MetricsLedger) -> str:
    """One row per (replica, category, direction): bytes and message count."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replica", "category", "direction", "bytes", "count"])
    for r in range(ledger.n):
        for direction, store in (("sent", ledger.sent[r]), ("received", ledger.received[r])):
            for cat in CATEGORIES:
                b = store.bytes_by_cat.get(cat, 0)
                c = store.count_by_cat.get(cat, 0)
                if b or c:
                    writer.writerow([r, cat, direction, b, c])
    return buf.getvalue()
